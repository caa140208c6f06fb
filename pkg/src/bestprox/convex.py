"""Finite-generator convex hulls, projection onto them, and hull-to-hull distance.

A :class:`Hull` in ``SUBSIMPLEX`` mode is ``{apex + sum_i l_i (g_i - apex)}``
with ``l_i >= 0`` and ``sum l_i <= 1``; with the default zero apex this is the
usual sub-simplex hull, which contains the origin. Carrying the apex explicitly
lets a translated hull ``A + h`` stay exactly representable.

Both optimisation problems are solved by conditional gradient (Frank-Wolfe)
over products of simplices, minimising ``0.5 * ||residual||**2``: Wolfe's
min-norm-point variant when the norm is Euclidean, away steps otherwise. The
Frank-Wolfe gap of that objective is a certified upper bound on the
suboptimality and is the stopping criterion. Nonsmooth problems that stall at
a kink are finished by a conic solve and re-certified the same way.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .spaces import ATOL, BlockVector, FlatNorm, NormKind, ShapeError, Vector

__all__ = [
    "ClosureMode",
    "Hull",
    "CoefficientPoint",
    "Projection",
    "HullDistance",
    "SolverError",
    "hull_point",
    "sample_hull_points",
    "project_onto_hull",
    "hull_distance",
    "contains",
    "MAX_ITER",
    "GAP_TOL",
]

MAX_ITER = 10_000
GAP_TOL = 1e-9
_STALL_WINDOW = 200
_KINK_EPS = 1e-9


class ClosureMode(enum.Enum):
    SIMPLEX = "simplex"
    SUBSIMPLEX = "subsimplex"


class SolverError(RuntimeError):
    """The conditional-gradient solver hit its iteration cap or stalled.

    Carries the best iterate found and certified bounds on the optimal
    distance, so callers can still report something useful.
    """

    def __init__(self, message, *, iterate=None, gap=float("nan"),
                 lower=float("nan"), upper=float("nan"), iterations=0):
        super().__init__(message)
        self.iterate = iterate
        self.gap = gap
        self.lower = lower
        self.upper = upper
        self.iterations = iterations


def _flatten(v: Vector, norm: NormKind) -> np.ndarray:
    if norm is NormKind.DAY:
        if not isinstance(v, BlockVector):
            raise ShapeError("Day hulls take BlockVector generators")
        return v.data
    if isinstance(v, BlockVector):
        raise ShapeError(f"{norm.value} hulls take flat vectors")
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Hull:
    generators: tuple
    mode: ClosureMode
    norm: NormKind
    apex: Vector | None = None
    vertices: np.ndarray = field(init=False, repr=False)
    depth: int | None = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise ValueError("a hull needs at least one generator")
        object.__setattr__(self, "generators", gens)
        flat = [_flatten(g, self.norm) for g in gens]
        dims = {f.size for f in flat}
        if len(dims) != 1:
            raise ShapeError(f"generators have mixed sizes {sorted(dims)}")
        depth = None
        if self.norm is NormKind.DAY:
            depths = {g.depth for g in gens}
            if len(depths) != 1:
                raise ShapeError("generators have mixed truncation depths")
            depth = depths.pop()
        object.__setattr__(self, "depth", depth)
        if self.mode is ClosureMode.SUBSIMPLEX:
            if self.apex is None:
                apex = BlockVector.zeros(depth) if depth else np.zeros(flat[0].size)
                object.__setattr__(self, "apex", apex)
            apex_flat = _flatten(self.apex, self.norm)
            if apex_flat.size != flat[0].size:
                raise ShapeError("apex does not match the generators")
            flat.append(apex_flat)
        elif self.apex is not None:
            raise ValueError("only sub-simplex hulls carry an apex")
        verts = np.vstack(flat)
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def kernels(self) -> FlatNorm:
        return FlatNorm(self.norm, self.dim, self.depth)

    def wrap(self, flat: np.ndarray) -> Vector:
        """Turn a flat array back into this hull's vector type."""
        if self.norm is NormKind.DAY:
            return BlockVector(flat, self.depth)
        out = np.array(flat, dtype=float)
        out.setflags(write=False)
        return out

    def translate(self, h: Vector) -> "Hull":
        gens = tuple(g + h for g in self.generators)
        apex = self.apex + h if self.mode is ClosureMode.SUBSIMPLEX else None
        return Hull(gens, self.mode, self.norm, apex)

    def weights(self, coefficients: np.ndarray) -> np.ndarray:
        """Vertex weights (apex weight appended in sub-simplex mode)."""
        if self.mode is ClosureMode.SUBSIMPLEX:
            return np.append(coefficients, max(0.0, 1.0 - coefficients.sum()))
        return coefficients

    def coefficients(self, weights: np.ndarray) -> np.ndarray:
        return np.array(weights[: self.n_generators], dtype=float)


@dataclass(frozen=True, eq=False)
class CoefficientPoint:
    coefficients: np.ndarray
    point: Vector

    @property
    def flat(self) -> np.ndarray:
        return self.point.data if isinstance(self.point, BlockVector) else self.point


def hull_point(h: Hull, coefficients: Sequence[float]) -> CoefficientPoint:
    lam = np.asarray(coefficients, dtype=float)
    if lam.shape != (h.n_generators,):
        raise ValueError(f"expected {h.n_generators} coefficients, got shape {lam.shape}")
    if np.any(lam < 0.0):
        raise ValueError("coefficients must be nonnegative")
    total = lam.sum()
    if h.mode is ClosureMode.SIMPLEX and abs(total - 1.0) > 1e-12:
        raise ValueError(f"simplex coefficients must sum to 1, got {total!r}")
    if h.mode is ClosureMode.SUBSIMPLEX and total > 1.0 + 1e-12:
        raise ValueError(f"sub-simplex coefficients must sum to at most 1, got {total!r}")
    w = h.weights(lam)
    lam.setflags(write=False)
    return CoefficientPoint(lam, h.wrap(w @ h.vertices))


def sample_hull_points(h: Hull, rng: np.random.Generator, count: int) -> list[CoefficientPoint]:
    """Draw hull points from a symmetric Dirichlet over the generators.

    Sub-simplex hulls additionally scale the Dirichlet draw by a uniform factor
    in ``[0, 1]``.
    """
    k = h.n_generators
    lam = rng.dirichlet(np.ones(k), size=count) if k > 1 else np.ones((count, 1))
    if h.mode is ClosureMode.SUBSIMPLEX:
        lam = lam * rng.uniform(0.0, 1.0, size=(count, 1))
    out = []
    for row in lam:
        w = h.weights(row)
        row = row.copy()
        row.setflags(write=False)
        out.append(CoefficientPoint(row, h.wrap(w @ h.vertices)))
    return out


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


@dataclass
class _Factor:
    vertices: np.ndarray  # (k, dim)
    sign: float
    weights: np.ndarray


@dataclass
class _Solution:
    weights: list[np.ndarray]
    distance: float
    gap: float
    iterations: int


def _refined_gap(kern: FlatNorm, factors: list[_Factor], r: np.ndarray, eps: float) -> float:
    """Smallest Frank-Wolfe gap over the eps-subdifferential at ``r``.

    Any subgradient certifies ``f(x) - f* <= gap``; at a kink the one chosen
    by :meth:`FlatNorm.half_sq_subgradient` can be uninformative, so the
    minimising subgradient is found with a small linear program.
    """
    lo, hi, eq = kern.subdifferential_box(r, eps)
    dim, nf = r.size, len(factors)
    rows = []
    for j, f in enumerate(factors):
        cur = f.weights @ f.vertices
        block = np.zeros((f.vertices.shape[0], dim + nf))
        block[:, :dim] = f.sign * (cur[None, :] - f.vertices)
        block[:, dim + j] = -1.0
        rows.append(block)
    A_ub = np.vstack(rows)
    cost = np.concatenate([np.zeros(dim), np.ones(nf)])
    bounds = list(zip(lo, hi)) + [(None, None)] * nf
    A_eq = b_eq = None
    if eq is not None:
        A_eq = np.concatenate([eq[0], np.zeros(nf)])[None, :]
        b_eq = [eq[1]]
    res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(A_ub.shape[0]), A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if not res.success:
        return np.inf
    return max(float(res.fun), 0.0)


def _conic_polish(kern: FlatNorm, factors: list[_Factor], target: np.ndarray) -> list[np.ndarray]:
    """Solve the nonsmooth problem directly as a conic program.

    Used once conditional gradient stalls at a kink; the result is then
    certified with :func:`_refined_gap` like any other iterate.
    """
    import cvxpy as cp  # heavy import, needed only on this path

    lams = [cp.Variable(f.vertices.shape[0], nonneg=True) for f in factors]
    expr = -target
    for f, lam in zip(factors, lams):
        expr = expr + f.sign * (f.vertices.T @ lam)
    if kern.kind is NormKind.SUP_2D:
        obj = cp.norm(expr, "inf")
    else:
        obj = cp.norm(kern.indicator.T @ cp.abs(expr), 2)
    prob = cp.Problem(cp.Minimize(obj), [cp.sum(lam) == 1 for lam in lams])
    with warnings.catch_warnings():
        # accuracy is settled by the piece solve and the gap certificate
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
                   tol_feas=1e-12, max_iter=500)
    if lams[0].value is None:
        raise SolverError(f"conic polish failed ({prob.status})")
    out = []
    for lam in lams:
        w = np.clip(np.asarray(lam.value, dtype=float), 0.0, None)
        w[w < 1e-13] = 0.0
        out.append(w / w.sum())
    return out


def _solve(kern: FlatNorm, factors: list[_Factor], target: np.ndarray,
           gap_tol: float, max_iter: int) -> _Solution:
    # coordinates that vanish in every vertex and in the target never move
    used = target != 0.0
    for f in factors:
        used |= np.any(f.vertices != 0.0, axis=0)
    cols = np.flatnonzero(used)
    if cols.size == 0:
        cols = np.array([0])
    if cols.size < target.size:
        kern = kern.restrict(cols)
        target = target[cols]
        factors = [_Factor(f.vertices[:, cols], f.sign, f.weights) for f in factors]
    if kern.kind is NormKind.EUCLIDEAN:
        return _min_norm_point(kern, factors, target, gap_tol, max_iter)
    return _away_step(kern, factors, target, gap_tol, max_iter)


def _affine_minimiser(Q: np.ndarray) -> np.ndarray:
    """Weights ``alpha`` (summing to 1) of the min-norm point of aff(rows of Q)."""
    if Q.shape[0] == 1:
        return np.ones(1)
    D = (Q[1:] - Q[0]).T
    beta, *_ = np.linalg.lstsq(D, -Q[0], rcond=None)
    return np.concatenate(([1.0 - beta.sum()], beta))


def _min_norm_point(kern, factors, target, gap_tol, max_iter):
    """Wolfe's fully corrective conditional gradient for Euclidean problems.

    The feasible set is the Minkowski combination of the factors, whose
    vertices are index tuples (one vertex per factor). The active "corral" is
    kept affinely independent and re-optimised exactly after every addition.
    """
    def vertex(idx):
        v = -target.copy()
        for f, i in zip(factors, idx):
            v += f.sign * f.vertices[i]
        return v

    corral = [tuple(int(np.argmax(f.weights)) for f in factors)]
    Q = vertex(corral[0])[None, :]
    lam = np.ones(1)
    x = Q[0].copy()
    gap = np.inf

    def weights():
        out = []
        for j, f in enumerate(factors):
            w = np.zeros(f.vertices.shape[0])
            for idx, l in zip(corral, lam):
                w[idx[j]] += l
            out.append(w / w.sum())
        return out

    for it in range(max_iter + 1):
        new = tuple(int(np.argmin(f.sign * (f.vertices @ x))) for f in factors)
        s_vec = vertex(new)
        gap = float(x @ x - x @ s_vec)
        if gap <= gap_tol:
            return _Solution(weights(), kern.value(x), max(gap, 0.0), it)
        if it == max_iter or new in corral:
            break
        corral.append(new)
        Q = np.vstack([Q, s_vec])
        lam = np.append(lam, 0.0)
        for _ in range(len(corral) + 1):
            alpha = _affine_minimiser(Q)
            if np.all(alpha > 1e-14):
                lam = alpha
                break
            neg = alpha <= 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(np.clip(ratios.min(), 0.0, 1.0))
            lam = theta * alpha + (1.0 - theta) * lam
            keep = lam > 1e-14
            keep[int(np.argmin(np.where(neg, ratios, np.inf)))] = False
            if not keep.any():
                keep[int(np.argmax(lam))] = True
            corral = [c for c, k in zip(corral, keep) if k]
            Q, lam = Q[keep], lam[keep]
            lam = lam / lam.sum()
        x = lam @ Q
    raise SolverError(
        f"no convergence after {it} iterations (gap {gap:.3e})",
        iterate=weights(), gap=gap, iterations=it,
    )


def _away_step(kern: FlatNorm, factors: list[_Factor], target: np.ndarray,
               gap_tol: float, max_iter: int) -> _Solution:
    """Away-step conditional gradient for the nonsmooth norms.

    Near a kink the linearisation stops describing the objective and the
    iterates zigzag. Once a step makes no progress, or a window of steps
    barely moves the objective, the problem is finished by a conic solve and
    the answer is accepted only if its refined gap meets the tolerance.
    """
    def residual():
        r = -target.copy()
        for f in factors:
            r += f.sign * (f.weights @ f.vertices)
        return r

    r = residual()
    gap = np.inf
    history = []
    for it in range(max_iter + 1):
        g = kern.half_sq_subgradient(r)
        fw_gaps, choices = [], []
        for f in factors:
            sc = f.sign * (f.vertices @ g)
            cur = float(f.weights @ sc)
            s = int(np.argmin(sc))
            active = np.flatnonzero(f.weights > 0.0)
            a = int(active[np.argmax(sc[active])])
            fw_gap, away_gap = cur - sc[s], sc[a] - cur
            fw_gaps.append(max(fw_gap, 0.0))
            choices.append((s, a, fw_gap, away_gap))
        gap = float(sum(fw_gaps))
        if gap <= gap_tol:
            return _Solution([f.weights for f in factors], kern.value(r), gap, it)
        if it == max_iter:
            break

        dirs, gmax = [], np.inf
        for f, (s, a, fw_gap, away_gap) in zip(factors, choices):
            d = np.zeros_like(f.weights)
            if max(fw_gap, away_gap) <= 0.0:
                dirs.append(d)
                continue
            if fw_gap >= away_gap:
                d -= f.weights
                d[s] += 1.0
                gmax = min(gmax, 1.0)
            else:
                d += f.weights
                d[a] -= 1.0
                wa = f.weights[a]
                gmax = min(gmax, wa / (1.0 - wa) if wa < 1.0 else np.inf)
            dirs.append(d)
        if not np.isfinite(gmax):
            gmax = 1.0
        D = np.zeros_like(r)
        for f, d in zip(factors, dirs):
            D += f.sign * (d @ f.vertices)
        step = kern.line_search(r, D, gmax)
        value = 0.5 * kern.value(r) ** 2
        history.append(value)
        slow = (len(history) > _STALL_WINDOW
                and history[-_STALL_WINDOW - 1] - value <= 1e-13 * max(1.0, value))
        if step <= 0.0 or slow:
            return _polish(kern, factors, target, gap_tol, it)
        for f, d in zip(factors, dirs):
            w = f.weights + step * d
            w[w < 1e-15] = 0.0
            f.weights = w / w.sum()
        r = residual()
    raise SolverError(
        f"no convergence after {max_iter} iterations (gap {gap:.3e})",
        iterate=[f.weights.copy() for f in factors], gap=gap, iterations=max_iter,
    )


def _piece_solve(kern: FlatNorm, factors: list[_Factor], target: np.ndarray,
                 weights: list[np.ndarray], tau: float) -> list[np.ndarray] | None:
    """Exact minimiser on the quadratic piece identified at ``weights``.

    The objective is piecewise quadratic. Fixing the weight supports, the
    sign pattern and (sup norm) the set of maximal entries turns the problem
    into an equality-constrained least-squares problem, solved through its
    KKT system. Returns None if the answer leaves the piece.
    """
    supports = [np.flatnonzero(w > tau) for w in weights]
    G = np.hstack([f.sign * f.vertices[sup].T for f, sup in zip(factors, supports)])
    nw = G.shape[1]
    r = -target.copy()
    for f, w in zip(factors, weights):
        r += f.sign * (w @ f.vertices)
    scale = max(1.0, float(np.abs(r).max()))
    sums = np.zeros((len(factors), nw))
    start = 0
    for j, sup in enumerate(supports):
        sums[j, start:start + sup.size] = 1.0
        start += sup.size

    if kern.kind is NormKind.SUP_2D:
        m = float(np.abs(r).max())
        top = np.flatnonzero(np.abs(r) >= m - tau * scale)
        sigma = np.sign(r[top])
        # variables (w, m); minimise 0.5 m**2
        P = np.zeros((1, nw + 1))
        P[0, -1] = 1.0
        q = np.zeros(1)
        E = np.vstack([np.hstack([sigma[:, None] * G[top], -np.ones((top.size, 1))]),
                       np.hstack([sums, np.zeros((len(factors), 1))])])
        e = np.concatenate([sigma * target[top], np.ones(len(factors))])
    else:
        zero = np.abs(r) <= tau * scale
        sigma = np.where(zero, 0.0, np.sign(r))
        H = (sigma[:, None] * kern.indicator).T
        P, q = H @ G, H @ target
        E = np.vstack([G[zero], sums])
        e = np.concatenate([target[zero], np.ones(len(factors))])

    nz = P.shape[1]
    K = np.block([[P.T @ P, E.T], [E, np.zeros((E.shape[0], E.shape[0]))]])
    rhs = np.concatenate([P.T @ q, e])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    z = sol[:nz]
    if np.any(z[:nw] < -1e-12) or np.abs(E @ z - e).max() > 1e-10 * scale:
        return None
    out, start = [], 0
    for f, sup in zip(factors, supports):
        w = np.zeros(f.vertices.shape[0])
        w[sup] = np.clip(z[start:start + sup.size], 0.0, None)
        start += sup.size
        out.append(w / w.sum())
    return out


def _polish(kern, factors, target, gap_tol, it) -> _Solution:
    before = [f.weights.copy() for f in factors]
    conic = _conic_polish(kern, factors, target)
    best_gap = np.inf
    for tau in (1e-7, 1e-6, 1e-8, 1e-5, 1e-9, 1e-4):
        weights = _piece_solve(kern, factors, target, conic, tau)
        if weights is None:
            continue
        for f, w in zip(factors, weights):
            f.weights = w
        r = -target.copy()
        for f in factors:
            r += f.sign * (f.weights @ f.vertices)
        scale = max(1.0, float(np.abs(r).max()))
        gap = _refined_gap(kern, factors, r, _KINK_EPS * scale)
        if gap <= gap_tol:
            return _Solution([f.weights for f in factors], kern.value(r), gap, it)
        best_gap = min(best_gap, gap)
    for f, w in zip(factors, before):
        f.weights = w
    raise SolverError(
        f"stalled at a nondifferentiable point; best refined gap {best_gap:.3e} after polishing",
        iterate=before, gap=best_gap, iterations=it,
    )


def _certified_bounds(kern, r, gap):
    upper = kern.value(r)
    lower = float(np.sqrt(max(0.0, upper * upper - 2.0 * gap)))
    return lower, upper


def _start_weights(k: int, index: int) -> np.ndarray:
    w = np.zeros(k)
    w[index] = 1.0
    return w


@dataclass(frozen=True)
class Projection:
    point: CoefficientPoint
    distance: float
    gap: float
    iterations: int

    def __iter__(self):
        # unpacks as (point, distance)
        yield self.point
        yield self.distance


@dataclass(frozen=True)
class HullDistance:
    first: CoefficientPoint
    second: CoefficientPoint
    distance: float
    gap: float
    iterations: int

    @property
    def lower(self) -> float:
        return float(np.sqrt(max(0.0, self.distance ** 2 - 2.0 * self.gap)))

    def __iter__(self):
        yield self.first
        yield self.second
        yield self.distance


def _to_point(h: Hull, weights: np.ndarray) -> CoefficientPoint:
    lam = h.coefficients(weights)
    lam.setflags(write=False)
    return CoefficientPoint(lam, h.wrap(weights @ h.vertices))


def project_onto_hull(p: Vector, h: Hull, *, start: int | None = None,
                      gap_tol: float = GAP_TOL, max_iter: int = MAX_ITER) -> Projection:
    """Nearest point of ``h`` to ``p`` in the hull's norm.

    ``start`` picks the initial vertex (index into generators, apex last);
    by default the nearest vertex is used, ties going to the lowest index.
    """
    target = _flatten(p, h.norm)
    if target.size != h.dim:
        raise ShapeError("point does not match the hull's space")
    kern = h.kernels()
    k = h.vertices.shape[0]
    if start is None:
        start = int(np.argmin(kern.values(h.vertices - target)))
    factor = _Factor(h.vertices, 1.0, _start_weights(k, start))
    try:
        sol = _solve(kern, [factor], target, gap_tol, max_iter)
    except SolverError as exc:
        w = exc.iterate[0]
        r = w @ h.vertices - target
        exc.lower, exc.upper = _certified_bounds(kern, r, exc.gap)
        exc.iterate = _to_point(h, w)
        raise
    return Projection(_to_point(h, sol.weights[0]), sol.distance, sol.gap, sol.iterations)


def hull_distance(h1: Hull, h2: Hull, *, gap_tol: float = GAP_TOL,
                  max_iter: int = MAX_ITER) -> HullDistance:
    """Minimising pair and distance between two hulls in the same space."""
    if h1.norm is not h2.norm or h1.dim != h2.dim:
        raise ShapeError("hulls live in different spaces")
    kern = h1.kernels()
    # closest vertex pair, one row at a time to keep memory at k2 * dim
    best = (np.inf, 0, 0)
    for i, v in enumerate(h1.vertices):
        vals = kern.values(v - h2.vertices)
        j = int(np.argmin(vals))
        if vals[j] < best[0]:
            best = (float(vals[j]), i, j)
    _, i, j = best
    factors = [
        _Factor(h1.vertices, 1.0, _start_weights(h1.vertices.shape[0], i)),
        _Factor(h2.vertices, -1.0, _start_weights(h2.vertices.shape[0], j)),
    ]
    try:
        sol = _solve(kern, factors, np.zeros(h1.dim), gap_tol, max_iter)
    except SolverError as exc:
        w1, w2 = exc.iterate
        r = w1 @ h1.vertices - w2 @ h2.vertices
        exc.lower, exc.upper = _certified_bounds(kern, r, exc.gap)
        exc.iterate = (_to_point(h1, w1), _to_point(h2, w2))
        raise
    w1, w2 = sol.weights
    return HullDistance(_to_point(h1, w1), _to_point(h2, w2), sol.distance,
                        sol.gap, sol.iterations)


def contains(h: Hull, p: Vector, atol: float = 1e-6) -> bool:
    return project_onto_hull(p, h).distance <= atol
