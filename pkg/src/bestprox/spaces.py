"""Vectors and norms.

Two representations live here and never convert into each other implicitly:

* :class:`BlockVector`, an element of the Day space truncated at depth ``N``.
  Block ``n`` holds ``n`` real entries and the norm is the l2-sum of the
  blockwise l1-norms.
* plain 1-D ``numpy`` arrays, measured with the Euclidean, 2-D sup or 2-D one
  norm.

Besides the public norm evaluation, the module exposes the low-level pieces the
convex solver needs on flat arrays: a subgradient of ``0.5 * ||v||**2`` and an
exact line search for that objective.
"""

from __future__ import annotations

import enum
from functools import lru_cache
from itertools import combinations
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ATOL",
    "DEFAULT_DEPTH",
    "BlockVector",
    "NormKind",
    "ShapeError",
    "unit_block_vector",
    "day_norm",
    "norm_eval",
    "sep_of_family",
]

#: Absolute tolerance used for comparisons unless an operation says otherwise.
ATOL = 1e-9
DEFAULT_DEPTH = 32


class ShapeError(ValueError):
    """A vector does not have the shape its norm or operation requires."""


class NormKind(enum.Enum):
    DAY = "day"
    EUCLIDEAN = "euclidean"
    SUP_2D = "sup2d"
    ONE_2D = "one2d"

    @property
    def strictly_convex(self) -> bool:
        return self is NormKind.EUCLIDEAN


@lru_cache(maxsize=None)
def _block_starts(depth: int) -> np.ndarray:
    n = np.arange(1, depth + 1)
    starts = n * (n - 1) // 2
    starts.setflags(write=False)
    return starts


def _flat_size(depth: int) -> int:
    return depth * (depth + 1) // 2


class BlockVector:
    """Element of the Day space truncated after ``depth`` blocks.

    Entries are stored in one flat read-only array; block ``n`` (1-based)
    occupies ``data[n*(n-1)//2 : n*(n+1)//2]``.
    """

    __slots__ = ("_data", "_depth")

    def __init__(self, data, depth: int):
        if depth < 1:
            raise ShapeError(f"truncation depth must be positive, got {depth}")
        arr = np.array(data, dtype=float)
        if arr.ndim != 1 or arr.size != _flat_size(depth):
            raise ShapeError(
                f"depth {depth} needs {_flat_size(depth)} entries, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        self._data = arr
        self._depth = depth

    @classmethod
    def _wrap(cls, arr: np.ndarray, depth: int) -> "BlockVector":
        # trusted internal constructor: takes ownership of a fresh array
        obj = cls.__new__(cls)
        arr.setflags(write=False)
        obj._data = arr
        obj._depth = depth
        return obj

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[float]]) -> "BlockVector":
        for n, block in enumerate(blocks, start=1):
            if len(block) != n:
                raise ShapeError(f"block {n} must have {n} entries, got {len(block)}")
        if not blocks:
            raise ShapeError("at least one block is required")
        return cls(np.concatenate([np.asarray(b, dtype=float) for b in blocks]), len(blocks))

    @classmethod
    def zeros(cls, depth: int = DEFAULT_DEPTH) -> "BlockVector":
        return cls(np.zeros(_flat_size(depth)), depth)

    @classmethod
    def from_leading(cls, leading: Sequence[float], depth: int = DEFAULT_DEPTH) -> "BlockVector":
        """Vector whose block ``n`` is ``leading[n-1] * e_1^n``."""
        leading = np.asarray(leading, dtype=float)
        if leading.shape != (depth,):
            raise ShapeError(f"expected {depth} leading coordinates, got {leading.shape}")
        data = np.zeros(_flat_size(depth))
        data[_block_starts(depth)] = leading
        return cls._wrap(data, depth)

    @property
    def depth(self) -> int:
        return self._depth

    @property
    def data(self) -> np.ndarray:
        return self._data

    def block(self, n: int) -> np.ndarray:
        if not 1 <= n <= self._depth:
            raise IndexError(f"block {n} outside 1..{self._depth}")
        start = n * (n - 1) // 2
        return self._data[start:start + n]

    @property
    def blocks(self) -> list[np.ndarray]:
        return [self.block(n) for n in range(1, self._depth + 1)]

    def leading(self) -> np.ndarray:
        """First entry of every block, i.e. the coordinates ``x(n)``."""
        return self._data[_block_starts(self._depth)].copy()

    def off_leading_mass(self) -> float:
        """l1 mass sitting outside the first entry of the blocks."""
        lead = self._data[_block_starts(self._depth)]
        return float(np.abs(self._data).sum() - np.abs(lead).sum())

    def _check(self, other: "BlockVector") -> None:
        if not isinstance(other, BlockVector):
            raise TypeError(f"cannot combine BlockVector with {type(other).__name__}")
        if other._depth != self._depth:
            raise ShapeError(f"truncation depths differ: {self._depth} vs {other._depth}")

    def __add__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector._wrap(self._data + other._data, self._depth)

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        self._check(other)
        return BlockVector._wrap(self._data - other._data, self._depth)

    def __mul__(self, alpha: float) -> "BlockVector":
        if not np.isscalar(alpha):
            return NotImplemented
        return BlockVector._wrap(self._data * float(alpha), self._depth)

    __rmul__ = __mul__

    def __neg__(self) -> "BlockVector":
        return BlockVector._wrap(-self._data, self._depth)

    def __truediv__(self, alpha: float) -> "BlockVector":
        return BlockVector(self._data / float(alpha), self._depth)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BlockVector):
            return NotImplemented
        return self._depth == other._depth and bool(np.array_equal(self._data, other._data))

    __hash__ = None

    def allclose(self, other: "BlockVector", atol: float = ATOL) -> bool:
        self._check(other)
        return bool(np.allclose(self._data, other._data, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        support = np.flatnonzero(self._data)
        return f"BlockVector(depth={self._depth}, nnz={support.size})"


def unit_block_vector(n: int, depth: int = DEFAULT_DEPTH) -> BlockVector:
    """The generator ``a_n``: ``e_1^n`` in block ``n`` and zero elsewhere."""
    if not 1 <= n <= depth:
        raise ShapeError(f"a_{n} does not fit in depth {depth}")
    leading = np.zeros(depth)
    leading[n - 1] = 1.0
    return BlockVector.from_leading(leading, depth)


Vector = Union[BlockVector, np.ndarray]


def day_norm(x: BlockVector) -> float:
    if not isinstance(x, BlockVector):
        raise ShapeError("the Day norm applies to BlockVector only")
    return _day_norm_flat(x.data, x.depth)


def _day_norm_flat(data: np.ndarray, depth: int) -> float:
    block_l1 = np.add.reduceat(np.abs(data), _block_starts(depth))
    return float(np.sqrt(np.dot(block_l1, block_l1)))


def _as_flat(x, norm: NormKind) -> np.ndarray:
    if norm is NormKind.DAY:
        raise AssertionError("unreachable")
    if isinstance(x, BlockVector):
        raise ShapeError(f"{norm.value} norm applies to flat vectors, not BlockVector")
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {arr.shape}")
    if norm in (NormKind.SUP_2D, NormKind.ONE_2D) and arr.shape != (2,):
        raise ShapeError(f"{norm.value} norm needs a 2-vector, got shape {arr.shape}")
    return arr


def norm_eval(x: Vector, norm: NormKind) -> float:
    if norm is NormKind.DAY:
        return day_norm(x)
    arr = _as_flat(x, norm)
    if norm is NormKind.EUCLIDEAN:
        return float(np.sqrt(np.dot(arr, arr)))
    if norm is NormKind.SUP_2D:
        return float(np.max(np.abs(arr)))
    return float(np.sum(np.abs(arr)))


def sep_of_family(points: Sequence[Vector], norm: NormKind) -> float:
    """Smallest distance between two distinct members of a finite family."""
    if len(points) < 2:
        raise ValueError("sep needs at least two points")
    return min(norm_eval(p - q, norm) for p, q in combinations(points, 2))


# ---------------------------------------------------------------------------
# Flat-array kernels used by the convex solver.
#
# The solver minimises 0.5 * ||r||**2 where r is an affine function of the
# coefficients. Each norm supplies the value, one subgradient, and an exact
# minimiser of gamma -> 0.5 * ||r + gamma * D||**2 on [0, gamma_max].
# ---------------------------------------------------------------------------


class FlatNorm:
    """Norm kernels on flat arrays.

    The l1 families (Day, 2-D one norm) are described by ``block_of``, the
    block index of every coordinate. Coordinates can be dropped with
    :meth:`restrict` when they are zero in every vector of a problem, which
    leaves all norms unchanged.
    """

    def __init__(self, kind: NormKind, dim: int, depth: int | None = None,
                 block_of: np.ndarray | None = None):
        self.kind = kind
        self.dim = dim
        if block_of is None:
            if kind is NormKind.DAY:
                if depth is None or _flat_size(depth) != dim:
                    raise ShapeError("Day kernels need a depth matching the flat size")
                block_of = np.repeat(np.arange(depth), np.arange(1, depth + 1))
            elif kind is NormKind.ONE_2D:
                block_of = np.zeros(dim, dtype=int)
        self.block_of = block_of
        if block_of is not None:
            nblocks = int(block_of.max()) + 1 if block_of.size else 1
            self.indicator = np.zeros((dim, nblocks))
            self.indicator[np.arange(dim), block_of] = 1.0

    @property
    def block_l1(self) -> bool:
        return self.block_of is not None

    def restrict(self, cols: np.ndarray) -> "FlatNorm":
        if self.block_of is None:
            return FlatNorm(self.kind, cols.size)
        sub = self.block_of[cols]
        if np.unique(sub).size == sub.size:
            # one coordinate per block: the block l1 norms are absolute
            # values and the norm is exactly Euclidean
            return FlatNorm(NormKind.EUCLIDEAN, cols.size)
        return FlatNorm(self.kind, cols.size, block_of=sub)

    def _block_sums(self, v):
        return np.abs(v) @ self.indicator

    def value(self, v: np.ndarray) -> float:
        if self.kind is NormKind.EUCLIDEAN:
            return float(np.sqrt(np.dot(v, v)))
        if self.kind is NormKind.SUP_2D:
            return float(np.max(np.abs(v)))
        s = self._block_sums(v)
        return float(np.sqrt(np.dot(s, s)))

    def values(self, rows: np.ndarray) -> np.ndarray:
        """Row-wise norms of a 2-D array."""
        if self.kind is NormKind.EUCLIDEAN:
            return np.sqrt(np.einsum("ij,ij->i", rows, rows))
        if self.kind is NormKind.SUP_2D:
            return np.max(np.abs(rows), axis=1)
        s = self._block_sums(rows)
        return np.sqrt(np.einsum("ij,ij->i", s, s))

    def half_sq_subgradient(self, v: np.ndarray) -> np.ndarray:
        """One subgradient of ``0.5 * ||v||**2``; sign(0) is taken as 0."""
        if self.kind is NormKind.EUCLIDEAN:
            return v.copy()
        if self.kind is NormKind.SUP_2D:
            g = np.zeros_like(v)
            k = int(np.argmax(np.abs(v)))
            g[k] = np.abs(v[k]) * np.sign(v[k])
            return g
        s = self._block_sums(v)
        return s[self.block_of] * np.sign(v)

    def subdifferential_box(self, v: np.ndarray, eps: float):
        """Describe the eps-subdifferential of ``0.5 * ||v||**2`` as an LP region.

        Returns ``(lo, hi, eq)``: entrywise bounds on ``g`` and either None or
        a pair ``(row, rhs)`` for one equality ``row @ g = rhs``. Coordinates
        with ``|v_i| <= eps`` count as zero; for block-l1 norms they may take
        any entry in ``[-s_n, s_n]``. For the sup norm ``g`` is ``||v||`` times
        a convex combination of signed unit vectors at the near-maximal entries.
        """
        if self.kind is NormKind.EUCLIDEAN:
            return v.copy(), v.copy(), None
        if self.kind is NormKind.SUP_2D:
            m = float(np.max(np.abs(v)))
            lo, hi = np.zeros_like(v), np.zeros_like(v)
            if m <= eps:
                return lo, hi, None
            active = np.abs(v) >= m - eps
            sign = np.where(active, np.sign(v), 0.0)
            hi[sign > 0] = m
            lo[sign < 0] = -m
            return lo, hi, (sign, m)
        bound = self._block_sums(v)[self.block_of]
        fixed = np.abs(v) > eps
        lo = np.where(fixed, bound * np.sign(v), -bound)
        hi = np.where(fixed, bound * np.sign(v), bound)
        return lo, hi, None

    def line_search(self, r: np.ndarray, d: np.ndarray, gamma_max: float) -> float:
        """Exact minimiser of ``0.5 * ||r + gamma d||**2`` over ``[0, gamma_max]``."""
        if self.kind is NormKind.EUCLIDEAN:
            dd = float(np.dot(d, d))
            if dd == 0.0:
                return 0.0
            return float(np.clip(-np.dot(r, d) / dd, 0.0, gamma_max))
        if self.kind is NormKind.SUP_2D:
            return self._sup_line_search(r, d, gamma_max)
        return self._block_l1_line_search(r, d, gamma_max)

    def _sup_line_search(self, r, d, gamma_max):
        # convex and piecewise linear: the minimum sits at a breakpoint,
        # i.e. an endpoint, a zero of some coordinate or a crossing |w_i| = |w_j|
        cand = [0.0, gamma_max]
        k = r.size
        for i in range(k):
            if d[i] != 0.0:
                cand.append(-r[i] / d[i])
            for j in range(i + 1, k):
                for s in (1.0, -1.0):
                    den = d[i] - s * d[j]
                    if den != 0.0:
                        cand.append((s * r[j] - r[i]) / den)
        cand = np.clip(np.array(cand), 0.0, gamma_max)
        vals = self.values(r[None, :] + cand[:, None] * d[None, :])
        return float(cand[int(np.argmin(vals))])

    def _slope(self, r, d, gamma):
        # right derivative of 0.5 * sum_n s_n(gamma)**2
        w = r + gamma * d
        sigma = np.where(w != 0.0, np.sign(w), np.sign(d))
        return float(np.dot(self._block_sums(w), (sigma * d) @ self.indicator))

    def _piece_minimiser(self, r, d, a, b, probe):
        # on a piece with a fixed sign pattern every block sum is affine in gamma
        sigma = np.sign(r + probe * d)
        alpha = (sigma * r) @ self.indicator
        beta = (sigma * d) @ self.indicator
        bb = float(np.dot(beta, beta))
        if bb == 0.0:
            return float(a)
        return float(np.clip(-float(np.dot(alpha, beta)) / bb, a, b))

    def _block_l1_line_search(self, r, d, gamma_max):
        # piecewise quadratic in gamma: locate the piece where the slope
        # changes sign, then solve that piece in closed form
        if not np.any(d):
            return 0.0
        nz = d != 0.0
        bp = -r[nz] / d[nz]
        bp = bp[(bp > 0.0) & (bp < gamma_max)]
        if bp.size == 0:
            if self._slope(r, d, 0.0) >= 0.0:
                return 0.0
            return self._piece_minimiser(r, d, 0.0, gamma_max, 0.5 * gamma_max)
        if self._slope(r, d, 0.0) >= 0.0:
            return 0.0
        knots = np.concatenate(([0.0], np.unique(bp), [gamma_max]))
        lo, hi = 0, len(knots) - 1
        if self._slope(r, d, knots[hi]) < 0.0:
            return float(knots[hi])
        # invariant: slope(knots[lo]) < 0 <= slope(knots[hi])
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self._slope(r, d, knots[mid]) < 0.0:
                lo = mid
            else:
                hi = mid
        a, b = knots[lo], knots[hi]
        return self._piece_minimiser(r, d, a, b, 0.5 * (a + b))
