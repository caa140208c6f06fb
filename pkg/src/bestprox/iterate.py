"""The ``u_n`` orbit, best-proximity residuals and asymptotic radius estimates.

For ``x`` with proximal counterpart ``x'`` (``x + h`` on side A, ``x - h`` on
side B) the orbit is ``u_n(x) = T^n(x')`` for odd ``n`` and ``T^n(x)`` for even
``n``. With a swap map both branches land on the side of ``x``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .maps import LabeledPoint, Mode, RelativeMap, Side
from .pairs import _jsonable
from .spaces import Vector, norm_eval

__all__ = [
    "IterationTrace",
    "RadiusEstimate",
    "RadiusSymmetry",
    "PreserveResult",
    "run_u_sequence",
    "best_proximity_residual",
    "estimate_radius",
    "radius_symmetry_diagnostic",
    "run_preserve_experiment",
    "CONVERGENCE_TOL",
    "TRACE_SCHEMA",
]

CONVERGENCE_TOL = 1e-6
DEFAULT_HORIZON = 400
DEFAULT_WINDOW = 50
TRACE_SCHEMA = "# bestprox-trace v1"
TRACE_COLUMNS = ("n", "side", "residual", "gap", "distance_to_reference")


def _orbit(T: RelativeMap, x: LabeledPoint, steps: int) -> list[LabeledPoint]:
    """``[x, T x, T^2 x, ..., T^steps x]``."""
    out = [x]
    for k in range(steps):
        try:
            out.append(T(out[-1]))
        except ValueError as exc:
            raise type(exc)(f"at step {k + 1}: {exc}") from exc
    return out


@dataclass(frozen=True, eq=False)
class IterationTrace:
    start: LabeledPoint
    points: list[LabeledPoint]
    residuals: np.ndarray
    gaps: np.ndarray
    horizon: int
    reference: Vector | None = None
    reference_distances: np.ndarray | None = None

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1])

    def rows(self) -> list[dict]:
        out = []
        for n in range(1, self.horizon + 1):
            ref = None if self.reference_distances is None else float(self.reference_distances[n - 1])
            out.append({
                "n": n,
                "side": self.points[n - 1].side.value,
                "residual": float(self.residuals[n - 1]),
                "gap": float(self.gaps[n - 1]),
                "distance_to_reference": ref,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(TRACE_SCHEMA + "\n")
        writer = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            row = {k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                   for k, v in row.items()}
            writer.writerow(row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema": TRACE_SCHEMA.lstrip("# "),
            "start": {"side": self.start.side.value, "point": _jsonable(self.start.point)},
            "horizon": self.horizon,
            "rows": self.rows(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def run_u_sequence(T: RelativeMap, x: LabeledPoint, horizon: int, *,
                   reference: Vector | None = None) -> IterationTrace:
    """Trace ``u_1(x) .. u_H(x)`` with residuals and gaps.

    ``residuals[n-1] = ||u_n(x) - T u_n(x)|| - d`` and
    ``gaps[n-1] = ||u_n(x) + h - u_n(x + h)||`` (``h`` sign-adjusted on side B).
    Both orbits ``T^k x`` and ``T^k x'`` are computed once and shared, since
    ``u_n(x') `` uses the same two orbits with the parities exchanged.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if T.mode is not Mode.SWAP:
        raise ValueError("the u_n orbit is defined for swap-mode maps")
    pair = T.pair
    xp = x.shifted(pair)
    orb_x = _orbit(T, x, horizon + 1)
    orb_xp = _orbit(T, xp, horizon + 1)
    h = pair.h if x.side is Side.A else -pair.h

    points, residuals, gaps = [], np.empty(horizon), np.empty(horizon)
    for n in range(1, horizon + 1):
        own, other = (orb_xp, orb_x) if n % 2 else (orb_x, orb_xp)
        u, u_shift = own[n], other[n]
        points.append(u)
        residuals[n - 1] = pair.dist(u.point, own[n + 1].point) - pair.d
        gaps[n - 1] = pair.dist(u.point + h, u_shift.point)
    ref_d = None
    if reference is not None:
        ref_d = np.array([pair.dist(p.point, reference) for p in points])
    return IterationTrace(x, points, residuals, gaps, horizon, reference, ref_d)


def best_proximity_residual(T: RelativeMap, x: LabeledPoint) -> float:
    """``||x - T x|| - d``; zero certifies a best proximity point."""
    pair = T.pair
    return pair.dist(x.point, T(x).point) - pair.d


@dataclass(frozen=True, eq=False)
class RadiusEstimate:
    value: float
    window: int
    horizon: int
    target: LabeledPoint


def _trailing_max(trace: IterationTrace, target: Vector, window: int, pair) -> float:
    tail = trace.points[trace.horizon - window:]
    return max(pair.dist(p.point, target) for p in tail)


def estimate_radius(T: RelativeMap, x: LabeledPoint, target: LabeledPoint,
                    horizon: int = DEFAULT_HORIZON, window: int = DEFAULT_WINDOW) -> RadiusEstimate:
    """Finite-horizon ``limsup_n ||u_n(x) - target||`` as a trailing-window max."""
    if not horizon >= window >= 1:
        raise ValueError(f"need horizon >= window >= 1, got H={horizon}, W={window}")
    if target.side is x.side:
        raise ValueError("target must lie on the side opposite to the orbit")
    trace = run_u_sequence(T, x, horizon)
    return RadiusEstimate(_trailing_max(trace, target.point, window, T.pair),
                          window, horizon, target)


@dataclass(frozen=True)
class RadiusSymmetry:
    r_xy: float
    r_yx: float
    gap: float


def radius_symmetry_diagnostic(T: RelativeMap, x: LabeledPoint, y: LabeledPoint,
                               horizon: int = DEFAULT_HORIZON,
                               window: int = DEFAULT_WINDOW) -> RadiusSymmetry:
    """Compare ``r_x(y + h)`` with ``r_{y+h}(x)`` at finite horizon.

    The two agree on minimal invariant pairs; elsewhere a nonzero gap is
    expected and is reported, not raised.
    """
    if x.side is not Side.A or y.side is not Side.A:
        raise ValueError("both points must be tagged A")
    yh = y.shifted(T.pair)
    r_xy = estimate_radius(T, x, yh, horizon, window).value
    r_yx = estimate_radius(T, yh, x, horizon, window).value
    return RadiusSymmetry(r_xy, r_yx, abs(r_xy - r_yx))


@dataclass(frozen=True, eq=False)
class PreserveResult:
    fixed_a: LabeledPoint
    fixed_b: LabeledPoint
    pair_distance: float
    residual_a: float
    residual_b: float
    distance_error: float
    converged: bool


def run_preserve_experiment(S: RelativeMap, x: LabeledPoint, horizon: int = DEFAULT_HORIZON, *,
                            tol: float = CONVERGENCE_TOL) -> PreserveResult:
    """Iterate a side-preserving map from ``x`` and from ``x + h``.

    Convergence means both final iterates are (numerically) fixed and sit at
    distance ``d`` from each other. Failing that is reported in the result.
    """
    if S.mode is not Mode.PRESERVE:
        raise ValueError("the experiment needs a preserve-mode map")
    if x.side is not Side.A:
        raise ValueError("start from a point tagged A")
    pair = S.pair
    a = _orbit(S, x, horizon)[-1]
    b = _orbit(S, x.shifted(pair), horizon)[-1]
    res_a = pair.dist(S(a).point, a.point)
    res_b = pair.dist(S(b).point, b.point)
    dist = pair.dist(a.point, b.point)
    err = abs(dist - pair.d)
    return PreserveResult(a, b, dist, res_a, res_b, err,
                          res_a <= tol and res_b <= tol and err <= tol)
