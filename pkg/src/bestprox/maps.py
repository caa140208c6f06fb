"""Relatively nonexpansive maps on a proximal parallel pair.

The worked example lives here: the Day-space pair ``A = co{a_n : n >= 2}``,
``B = A + a_1`` and the swap map that squares ``x(2)``, shifts every
coordinate one block outwards and damps it by ``c_i = exp(-b_{i-1})`` with
``b_n = 1/(2n - 1) - 1/(2n)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .convex import ClosureMode, Hull, sample_hull_points
from .pairs import DEFAULT_SEED, ProximalParallelPair, make_parallel_pair
from .spaces import DEFAULT_DEPTH, BlockVector, NormKind, Vector, norm_eval, unit_block_vector

__all__ = [
    "Side",
    "Mode",
    "LabeledPoint",
    "RelativeMap",
    "DomainError",
    "DayCoefficients",
    "day_coefficients",
    "day_pair",
    "day_example_map",
    "check_day_member",
    "identity_map",
    "iterate_map",
    "estimate_asymptotic_constant",
    "estimate_asymptotic_constants",
    "squared_map_preserve",
]

MEMBERSHIP_TOL = 1e-7


class Side(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Side":
        return Side.B if self is Side.A else Side.A


class Mode(str, enum.Enum):
    SWAP = "swap"
    PRESERVE = "preserve"


class DomainError(ValueError):
    """A point handed to a map is not in the set its side tag claims."""


@dataclass(frozen=True, eq=False)
class LabeledPoint:
    point: Vector
    side: Side

    def shifted(self, pair: ProximalParallelPair) -> "LabeledPoint":
        """The proximal counterpart ``x + h`` (side A) or ``x - h`` (side B)."""
        if self.side is Side.A:
            return LabeledPoint(self.point + pair.h, Side.B)
        return LabeledPoint(self.point - pair.h, Side.A)


@dataclass(frozen=True, eq=False)
class RelativeMap:
    mode: Mode
    apply: Callable[[LabeledPoint], LabeledPoint]
    k_bound: Callable[[int], float]
    pair: ProximalParallelPair
    name: str = "map"

    def __call__(self, x: LabeledPoint) -> LabeledPoint:
        return self.apply(x)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DayCoefficients:
    """``b_n``, ``c_n`` and ``P_n = prod_{i=2}^n c_i`` for ``n <= n_max``.

    Arrays are indexed by ``n`` directly (index 0 unused, set to nan);
    ``c`` runs to ``n_max + 1`` so that every ``b_n`` has its ``c_{n+1}``.
    ``P_1`` is the empty product 1.
    """

    n_max: int
    b: np.ndarray
    c: np.ndarray
    log_P: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return np.exp(self.log_P)

    def partial_product(self, n: int) -> float:
        if n < 1:
            raise ValueError("products start at n = 1")
        if n > self.n_max:
            return day_coefficients(n).partial_product(n)
        return float(math.exp(self.log_P[n]))


def day_coefficients(n_max: int) -> DayCoefficients:
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    n = np.arange(1, n_max + 1, dtype=float)
    b = np.concatenate(([np.nan], 1.0 / (2 * n - 1) - 1.0 / (2 * n)))
    c = np.concatenate(([np.nan, np.nan], np.exp(-b[1:])))  # c[k] = exp(-b[k-1])
    # log P_n = -sum_{i=1}^{n-1} b_i
    log_P = np.concatenate(([np.nan, 0.0], -np.cumsum(b[1:n_max])))
    for arr in (b, c, log_P):
        arr.setflags(write=False)
    return DayCoefficients(n_max, b, c, log_P)


# ---------------------------------------------------------------------------
# the Day example
# ---------------------------------------------------------------------------


def day_pair(depth: int = DEFAULT_DEPTH) -> ProximalParallelPair:
    """``A = co{a_2, ..., a_N}`` (sub-simplex, so 0 is in A) and ``B = A + a_1``."""
    if depth < 3:
        raise ValueError("the Day pair needs depth at least 3")
    gens = tuple(unit_block_vector(n, depth) for n in range(2, depth + 1))
    A = Hull(gens, ClosureMode.SUBSIMPLEX, NormKind.DAY)
    return make_parallel_pair(A, unit_block_vector(1, depth))


def check_day_member(x: LabeledPoint, depth: int, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Leading coordinates of ``x`` after checking it lies in its tagged Day set."""
    p = x.point
    if not isinstance(p, BlockVector) or p.depth != depth:
        raise DomainError(f"expected a BlockVector of depth {depth}")
    lead = p.leading()
    first = 0.0 if x.side is Side.A else 1.0
    problems = []
    if p.off_leading_mass() > tol:
        problems.append("mass outside the leading block entries")
    if abs(lead[0] - first) > tol:
        problems.append(f"x(1) = {float(lead[0])!r}, expected {first}")
    if np.any(lead[1:] < -tol):
        problems.append("negative coordinate")
    if lead[1:].sum() > 1.0 + tol:
        problems.append(f"coordinates sum to {float(lead[1:].sum())!r} > 1")
    if problems:
        raise DomainError(f"point is not in {x.side.value}: " + "; ".join(problems))
    return lead


def day_example_map(pair: ProximalParallelPair | None = None, *,
                    coefficients: DayCoefficients | None = None) -> RelativeMap:
    """The swap map of the worked example.

    On leading coordinates ``x(n)``: ``y(1) = 1`` for A-inputs and 0 for
    B-inputs, ``y(2) = 0``, ``y(3) = x(2)**2`` and ``y(n+1) = c_{n-1} x(n)``
    for ``n >= 3``. Whatever would land beyond the truncation depth is dropped.
    """
    if pair is None:
        pair = day_pair()
    depth = pair.A.depth
    coeffs = coefficients or day_coefficients(max(depth + 1, 2500))
    # multiplier for x(n) -> y(n+1), n = 3..depth-1: c_{n-1}
    shift_scale = np.array([coeffs.c[n - 1] for n in range(3, depth)])

    def apply(x: LabeledPoint) -> LabeledPoint:
        lead = check_day_member(x, depth)
        y = np.zeros(depth)
        y[0] = 1.0 if x.side is Side.A else 0.0
        if depth >= 3:
            y[2] = lead[1] ** 2
        # lead[k] holds x(k+1)
        y[3:depth] = shift_scale * lead[2:depth - 1]
        return LabeledPoint(BlockVector.from_leading(y, depth), x.side.other)

    def k_bound(n: int) -> float:
        if n < 1:
            raise ValueError("n must be positive")
        return 2.0 * coeffs.partial_product(n)

    return RelativeMap(Mode.SWAP, apply, k_bound, pair, name="day-example")


def identity_map(pair: ProximalParallelPair) -> RelativeMap:
    """Identity in preserve mode; with ``A = B`` this is the fixed-point regime."""
    return RelativeMap(Mode.PRESERVE, lambda x: x, lambda n: 1.0, pair, name="identity")


# ---------------------------------------------------------------------------
# generic operations
# ---------------------------------------------------------------------------


def iterate_map(T: RelativeMap, x: LabeledPoint, n: int) -> LabeledPoint:
    if n < 1:
        raise ValueError("n must be positive")
    for _ in range(n):
        x = T(x)
    return x


def estimate_asymptotic_constants(T: RelativeMap, n_max: int, sample_count: int = 500, *,
                                  seed: int = DEFAULT_SEED,
                                  min_separation: float = 1e-6) -> np.ndarray:
    """Estimates ``k_1 .. k_{n_max}`` from one set of sampled pairs.

    Entry ``n - 1`` is the largest sampled ``||T^n x - T^n y|| / ||x - y||``
    over ``x`` in A and ``y`` in B; orbits are followed incrementally.
    """
    if n_max < 1:
        raise ValueError("n must be positive")
    pair = T.pair
    rng = np.random.default_rng(seed)
    xs = sample_hull_points(pair.A, rng, sample_count)
    ys = sample_hull_points(pair.B, rng, sample_count)
    best = np.full(n_max, -np.inf)
    used = 0
    for x, y in zip(xs, ys):
        den = norm_eval(x.point - y.point, pair.norm)
        if den <= min_separation:
            continue
        used += 1
        tx, ty = LabeledPoint(x.point, Side.A), LabeledPoint(y.point, Side.B)
        for k in range(n_max):
            tx, ty = T(tx), T(ty)
            best[k] = max(best[k], norm_eval(tx.point - ty.point, pair.norm) / den)
    if used == 0:
        raise ValueError("every sampled pair was degenerate")
    return best


def estimate_asymptotic_constant(T: RelativeMap, n: int, sample_count: int = 500, *,
                                 seed: int = DEFAULT_SEED, min_separation: float = 1e-6) -> float:
    """Largest sampled ``||T^n x - T^n y|| / ||x - y||`` over ``x`` in A, ``y`` in B."""
    est = estimate_asymptotic_constants(T, n, sample_count, seed=seed,
                                        min_separation=min_separation)
    return float(est[n - 1])


def squared_map_preserve(T: RelativeMap) -> RelativeMap:
    """``S = T o T``, which keeps each side; ``k_S(n) = k_T(2n)``."""
    if T.mode is not Mode.SWAP:
        raise ValueError("squaring is meant for swap-mode maps")
    return RelativeMap(
        Mode.PRESERVE,
        lambda x: T(T(x)),
        lambda n: T.k_bound(2 * n),
        T.pair,
        name=f"{T.name}^2",
    )
