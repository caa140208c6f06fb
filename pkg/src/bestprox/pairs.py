"""Proximal pairs and sample-based checks of their geometric properties."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .convex import (
    ClosureMode,
    Hull,
    hull_distance,
    project_onto_hull,
    sample_hull_points,
)
from .spaces import BlockVector, NormKind, Vector, norm_eval

__all__ = [
    "Verdict",
    "PropertyReport",
    "ProximalPair",
    "ProximalParallelPair",
    "PairConstructionError",
    "make_parallel_pair",
    "random_orthogonal_pair",
    "check_sharpness",
    "check_rectangle",
    "uc_sequences",
    "check_property_uc",
    "check_hilbert_orthogonality",
    "StrictConvexityDemo",
    "strict_convexity_demo",
    "DEFAULT_SAMPLES",
    "DEFAULT_SEED",
]

DEFAULT_SAMPLES = 1000
DEFAULT_HORIZON = 200
DEFAULT_SEED = 20240601
PAIR_TOL = 1e-7


class Verdict(str, enum.Enum):
    HOLDS = "holds-on-samples"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


def _jsonable(obj):
    if isinstance(obj, BlockVector):
        return {"depth": obj.depth, "leading": obj.leading().tolist(),
                "off_leading_mass": obj.off_leading_mass()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


@dataclass(frozen=True)
class PropertyReport:
    property: str
    verdict: Verdict
    max_violation: float
    samples: int
    seed: int | None
    tolerance: float
    witness: Any = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.verdict is Verdict.VIOLATED) != (self.witness is not None):
            raise ValueError("a witness accompanies exactly the violated verdicts")

    @property
    def ok(self) -> bool:
        return self.verdict is not Verdict.VIOLATED

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "verdict": self.verdict.value,
            "max_violation": self.max_violation,
            "witness": _jsonable(self.witness),
            "samples": self.samples,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "details": _jsonable(self.details),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _report(name, violation, tol, samples, seed, witness, details=None):
    violated = violation > tol
    return PropertyReport(
        property=name,
        verdict=Verdict.VIOLATED if violated else Verdict.HOLDS,
        max_violation=float(violation),
        samples=samples,
        seed=seed,
        tolerance=tol,
        witness=witness if violated else None,
        details=details or {},
    )


@dataclass(frozen=True, eq=False)
class ProximalPair:
    """A pair of hulls together with their distance."""

    A: Hull
    B: Hull
    d: float

    @property
    def norm(self) -> NormKind:
        return self.A.norm

    def dist(self, u: Vector, v: Vector) -> float:
        return norm_eval(u - v, self.norm)


@dataclass(frozen=True, eq=False)
class ProximalParallelPair(ProximalPair):
    """``B = A + h`` with the distance attained along ``h``."""

    h: Vector = None

    @property
    def degenerate(self) -> bool:
        return self.d == 0.0


class PairConstructionError(ValueError):
    pass


def make_parallel_pair(A: Hull, h: Vector, *, tol: float = PAIR_TOL) -> ProximalParallelPair:
    """Build ``(A, A + h)`` and check that the distance is attained along ``h``."""
    B = A.translate(h)
    h_norm = norm_eval(h, A.norm)
    d = hull_distance(A, B).distance
    if abs(d - h_norm) > tol:
        raise PairConstructionError(
            f"pair is parallel but distance is not attained along h "
            f"(dist(A, B) = {d:.12g}, ||h|| = {h_norm:.12g})"
        )
    # every generator of A must reach B at distance exactly ||h||
    for g in A.generators:
        got = project_onto_hull(g, B).distance
        if abs(got - h_norm) > tol:
            raise PairConstructionError(
                f"pair is parallel but distance is not attained along h "
                f"(generator reaches B at {got:.12g}, ||h|| = {h_norm:.12g})"
            )
    return ProximalParallelPair(A, B, h_norm, h)


def _rng(seed):
    return np.random.default_rng(seed)


def random_orthogonal_pair(rng: np.random.Generator, dim: int = 5, n_generators: int = 6,
                           h_length: float = 2.0) -> ProximalParallelPair:
    """Euclidean pair whose ``A`` lies in a hyperplane orthogonal to ``h``.

    The hyperplane, the direction of ``h`` and the generators are random.
    """
    if dim < 2:
        raise ValueError("need at least two dimensions")
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    normal, tangent = basis[:, 0], basis[:, 1:]
    offset = rng.standard_normal(dim)
    gens = tuple(offset + tangent @ rng.standard_normal(dim - 1) for _ in range(n_generators))
    A = Hull(gens, ClosureMode.SIMPLEX, NormKind.EUCLIDEAN)
    return make_parallel_pair(A, h_length * normal)


def check_sharpness(pair: ProximalPair, sample_count: int = 50, *, seed: int = DEFAULT_SEED,
                    starts: int = 2, point_tol: float = 1e-6,
                    dist_tol: float = 1e-9) -> PropertyReport:
    """Nearest points between the two sets are unique (and equal ``a + h``).

    Each sampled ``a`` in ``A`` is projected onto ``B`` from several starting
    vertices. Every minimiser found, plus every sampled point of ``B`` within
    ``d + dist_tol`` of ``a``, must coincide with the reference minimiser
    (``a + h`` for parallel pairs) to within ``point_tol``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    rng = _rng(seed)
    h = getattr(pair, "h", None)
    # a few exact generators, the rest random
    n_gen = min(pair.A.n_generators, max(1, sample_count // 4))
    A_pts = list(pair.A.generators[:n_gen]) + [
        p.point for p in sample_hull_points(pair.A, rng, sample_count - n_gen)]
    B_probe = [p.point for p in sample_hull_points(pair.B, rng, 200)] + list(pair.B.generators)
    n_vertices = pair.B.vertices.shape[0]
    start_ids = list(dict.fromkeys([None] + [i * (n_vertices - 1) // max(1, starts - 1)
                                             for i in range(starts)]))

    worst, witness = 0.0, None
    for a in A_pts:
        found = [project_onto_hull(a, pair.B, start=s) for s in start_ids]
        ref = a + h if h is not None else found[0].point.point
        for pr in found:
            dist_err = abs(pr.distance - pair.d)
            sep = pair.dist(pr.point.point, ref)
            v = max(dist_err - dist_tol, 0.0) + (sep if sep > point_tol else 0.0)
            if v > worst:
                worst = v
                witness = {"a": a, "nearest": [ref, pr.point.point], "separation": sep,
                           "distances": [pair.dist(a, ref), pr.distance]}
        for b in B_probe:
            if pair.dist(a, b) <= pair.d + dist_tol:
                sep = pair.dist(b, ref)
                if sep > point_tol and sep > worst:
                    worst = sep
                    witness = {"a": a, "nearest": [ref, b], "separation": sep,
                               "distances": [pair.dist(a, ref), pair.dist(a, b)]}
    return _report("sharpness", worst, 0.0, len(A_pts), seed, witness,
                   {"starts": len(start_ids), "point_tol": point_tol})


def check_rectangle(pair: ProximalParallelPair, sample_count: int = DEFAULT_SAMPLES, *,
                    seed: int = DEFAULT_SEED, tol: float = 1e-10) -> PropertyReport:
    """``||x + h - y|| == ||y + h - x||`` over sampled ``x, y`` in ``A``."""
    rng = _rng(seed)
    xs = sample_hull_points(pair.A, rng, sample_count)
    ys = sample_hull_points(pair.A, rng, sample_count)
    worst, witness = 0.0, None
    h = pair.h
    for x, y in zip(xs, ys):
        x, y = x.point, y.point
        v = abs(norm_eval(x + h - y, pair.norm) - norm_eval(y + h - x, pair.norm))
        if v > worst:
            worst, witness = v, {"x": x, "y": y}
    return _report("rectangle", worst, tol, sample_count, seed, witness)


def uc_sequences(pair: ProximalParallelPair, horizon: int = DEFAULT_HORIZON, *,
                 rng: np.random.Generator) -> tuple[list, list, list]:
    """Sequences ``x_n, z_n`` in ``A`` and ``y_n`` in ``B`` whose distances tend to ``d``.

    ``x_n = w + (u - w)/n`` and ``z_n = w + (v - w)/n`` for random ``u, v, w``
    in ``A``, with ``y_n = w + h`` held fixed.
    """
    u, v, w = (p.point for p in sample_hull_points(pair.A, rng, 3))
    xs = [w + (u - w) * (1.0 / n) for n in range(1, horizon + 1)]
    zs = [w + (v - w) * (1.0 / n) for n in range(1, horizon + 1)]
    ys = [w + pair.h] * horizon
    return xs, zs, ys


def check_property_uc(pair: ProximalParallelPair, xs: Sequence, zs: Sequence, ys: Sequence, *,
                      modulus: str | Callable | None = "pythagorean",
                      tol: float = 1e-10, seed: int | None = None) -> PropertyReport:
    """Property UC on caller-supplied sequences.

    With ``modulus="pythagorean"`` (valid whenever ``||x + h - y||**2 =
    d**2 + ||x - y||**2``, as on the Day pair and on orthogonal Euclidean
    pairs) every index must satisfy::

        ||x_n - z_n|| <= sqrt(||x_n - y_n||**2 - d**2) + sqrt(||z_n - y_n||**2 - d**2)

    A callable ``modulus(dx, dz) -> bound`` can be supplied instead. Without a
    modulus only the trend of ``||x_n - z_n||`` is reported, as inconclusive.
    """
    if not (len(xs) == len(zs) == len(ys)):
        raise ValueError(f"sequence lengths differ: {len(xs)}, {len(zs)}, {len(ys)}")
    if len(xs) < 10:
        raise ValueError("property UC needs a horizon of at least 10")
    d = pair.d
    gaps = np.array([pair.dist(x, z) for x, z in zip(xs, zs)])
    dx = np.array([pair.dist(x, y) for x, y in zip(xs, ys)])
    dz = np.array([pair.dist(z, y) for z, y in zip(zs, ys)])
    details = {"gap_start": float(gaps[0]), "gap_end": float(gaps[-1]),
               "approach_end": float(max(dx[-1], dz[-1]) - d)}
    if modulus is None:
        return PropertyReport("uc", Verdict.INCONCLUSIVE, 0.0, len(xs), seed, tol, details=details)
    if modulus == "pythagorean":
        bound = (np.sqrt(np.maximum(dx * dx - d * d, 0.0))
                 + np.sqrt(np.maximum(dz * dz - d * d, 0.0)))
    else:
        bound = np.array([modulus(a, b) for a, b in zip(dx, dz)])
    excess = gaps - bound
    k = int(np.argmax(excess))
    worst = max(float(excess[k]), 0.0)
    witness = {"index": k + 1, "gap": float(gaps[k]), "bound": float(bound[k])}
    return _report("uc", worst, tol, len(xs), seed, witness, details)


def check_hilbert_orthogonality(pair: ProximalParallelPair, sample_count: int = DEFAULT_SAMPLES, *,
                                seed: int = DEFAULT_SEED, tol: float = 1e-12,
                                vi_tol: float = 1e-8, projections: int | None = None,
                                eps: float = 1e-300) -> PropertyReport:
    """Differences inside ``A`` are orthogonal to ``h``; projections satisfy
    the variational inequality ``<z - P(x), P(x) - x> >= 0``.

    ``max_violation`` is the worst normalised inner product
    ``|<y - x, h>| / (||y - x|| ||h||)``. The variational inequality is
    checked for ``projections`` sampled ``x`` (default ``sample_count``),
    each against a sampled ``z`` in ``B``, and reported in ``details``.
    """
    if pair.norm is not NormKind.EUCLIDEAN:
        raise ValueError("orthogonality needs the Euclidean norm")
    h = np.asarray(pair.h, dtype=float)
    h_norm = float(np.linalg.norm(h))
    if h_norm == 0.0:
        return PropertyReport("hilbert-orthogonality", Verdict.HOLDS, 0.0, 0, seed, tol,
                              details={"degenerate": True})
    rng = _rng(seed)
    xs = sample_hull_points(pair.A, rng, sample_count)
    ys = sample_hull_points(pair.A, rng, sample_count)
    worst, raw_worst, witness = 0.0, 0.0, None
    for x, y in zip(xs, ys):
        diff = y.point - x.point
        raw = abs(float(diff @ h))
        v = raw / (float(np.linalg.norm(diff)) * h_norm + eps)
        raw_worst = max(raw_worst, raw)
        if v > worst:
            worst, witness = v, {"kind": "orthogonality", "x": x.point, "y": y.point}

    n_proj = sample_count if projections is None else projections
    zs = sample_hull_points(pair.B, rng, n_proj)
    vi_min = np.inf
    vi_witness = None
    for x, z in zip(xs[:n_proj], zs):
        q = project_onto_hull(x.point, pair.B).point.point
        val = float((z.point - q) @ (q - x.point))
        if val < vi_min:
            vi_min, vi_witness = val, {"kind": "variational-inequality", "x": x.point,
                                       "projection": q, "z": z.point}
    details = {"raw_inner_product_max": raw_worst, "variational_min": float(vi_min),
               "variational_tol": vi_tol, "projections": n_proj}
    if worst <= tol and vi_min < -vi_tol:
        return PropertyReport("hilbert-orthogonality", Verdict.VIOLATED, float(-vi_min),
                              sample_count, seed, tol, witness=vi_witness, details=details)
    return _report("hilbert-orthogonality", worst, tol, sample_count, seed, witness, details)


@dataclass(frozen=True, eq=False)
class StrictConvexityDemo:
    norm: NormKind
    pair: ProximalPair
    sphere_deviation: float
    sharpness: PropertyReport
    translation_exists: bool
    reason: str

    def to_dict(self) -> dict:
        return {
            "norm": self.norm.value,
            "A": _jsonable(list(self.pair.A.generators)),
            "B": _jsonable(list(self.pair.B.generators)),
            "dist": self.pair.d,
            "sphere_deviation": self.sphere_deviation,
            "sharpness": self.sharpness.to_dict(),
            "translation_exists": self.translation_exists,
            "reason": self.reason,
        }


_DEMO_SEGMENTS = {
    NormKind.SUP_2D: (np.array([1.0, 0.0]), np.array([1.0, 1.0])),
    NormKind.ONE_2D: (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
}


def strict_convexity_demo(norm: NormKind, sample_count: int = 200, *,
                          seed: int = DEFAULT_SEED) -> StrictConvexityDemo:
    """``A = {0}`` against a segment lying on the unit sphere of ``norm``.

    Every point of the segment is nearest to the origin, so the pair is not
    sharp, and since ``B`` is not a singleton it is no translate of ``A``.
    """
    if norm.strictly_convex or norm is NormKind.DAY:
        if norm is NormKind.EUCLIDEAN:
            raise ValueError("norm is strictly convex")
        raise ValueError("the demonstration is defined for the 2-D sup and one norms")
    A = Hull((np.zeros(2),), ClosureMode.SIMPLEX, norm)
    B = Hull(_DEMO_SEGMENTS[norm], ClosureMode.SIMPLEX, norm)
    d = hull_distance(A, B).distance
    pair = ProximalPair(A, B, d)
    rng = _rng(seed)
    bs = [p.point for p in sample_hull_points(B, rng, sample_count)] + list(B.generators)
    deviation = max(abs(norm_eval(b, norm) - 1.0) for b in bs)
    sharp = check_sharpness(pair, 1, seed=seed)
    return StrictConvexityDemo(
        norm=norm,
        pair=pair,
        sphere_deviation=float(deviation),
        sharpness=sharp,
        translation_exists=pair.dist(B.generators[0], B.generators[-1]) == 0.0,
        reason="B is a nondegenerate segment and A a single point, so B = A + h has no solution",
    )
