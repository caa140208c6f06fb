"""Command-line front end.

Exit codes: 0 pass, 1 a check failed, 2 usage or configuration error,
3 numerical solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .convex import SolverError, hull_distance, sample_hull_points
from .iterate import (
    best_proximity_residual,
    radius_symmetry_diagnostic,
    run_preserve_experiment,
    run_u_sequence,
)
from .maps import (
    DomainError,
    LabeledPoint,
    Side,
    check_day_member,
    day_coefficients,
    day_example_map,
    day_pair,
    estimate_asymptotic_constants,
    squared_map_preserve,
)
from .pairs import (
    DEFAULT_SEED,
    check_hilbert_orthogonality,
    check_property_uc,
    check_rectangle,
    check_sharpness,
    random_orthogonal_pair,
    strict_convexity_demo,
    uc_sequences,
)
from .spaces import BlockVector, NormKind, norm_eval, unit_block_vector

log = logging.getLogger("bestprox")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

# horizon from which orbit convergence is asserted rather than only reported
CONVERGENCE_CLAIM_HORIZON = 200
N_STARTS = 100
N_UC_TRIPLES = 100
K_MAX = 20


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    depth: int = 32
    horizon: int = 400
    window: int = 50
    samples: int = 1000
    seed: int = DEFAULT_SEED
    tol: float = 1e-6
    format: str = "json"
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.depth < 4:
            raise ConfigError(f"depth must be at least 4, got {self.depth}")
        if not self.horizon >= self.window >= 1:
            raise ConfigError(f"need horizon >= window >= 1, got {self.horizon}, {self.window}")
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if not (self.tol > 0.0 and math.isfinite(self.tol)):
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        return self


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    t = types[name]
    try:
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def load_config(path: str | Path) -> dict:
    """Read a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = {"tolerance": "tol", "sample_count": "samples", "truncation_depth": "depth"}.get(key, key)
        values[key] = _coerce(key, raw)
    return values


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config(args.config) if getattr(args, "config", None) else {}
    values.update({k: getattr(args, k) for k in ("depth", "horizon", "window", "samples", "seed",
                                                 "tol", "format", "out")
                   if getattr(args, k, None) is not None})
    cfg = replace(ExperimentConfig(), **values)
    if "window" not in values and cfg.window > cfg.horizon:
        # the default window shrinks to short horizons; an explicit one does not
        cfg = replace(cfg, window=cfg.horizon)
    return cfg.validate()


def _emit(text: str, cfg: ExperimentConfig) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _table_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# reproduce-paper
# ---------------------------------------------------------------------------


def _check(name, value, threshold, passed, enforced=True, **extra):
    return {"check": name, "value": float(value), "threshold": threshold,
            "passed": bool(passed), "enforced": enforced, **extra}


def reproduce(cfg: ExperimentConfig) -> dict:
    """Run every experiment on the Day example and collect the results."""
    rng = np.random.default_rng(cfg.seed)
    pair = day_pair(cfg.depth)
    T = day_example_map(pair)
    a1 = unit_block_vector(1, cfg.depth)
    checks = []

    checks.append(_check("dist-analytic", pair.d, "== 1", pair.d == 1.0))
    cg = hull_distance(pair.A, pair.B).distance
    checks.append(_check("dist-conditional-gradient", abs(cg - 1.0), 1e-7, abs(cg - 1.0) <= 1e-7))

    xs = sample_hull_points(pair.A, rng, cfg.samples)
    ys = sample_hull_points(pair.A, rng, cfg.samples)
    ident = max(abs(norm_eval(x.point + a1 - y.point, NormKind.DAY)
                    - math.sqrt(1.0 + norm_eval(x.point - y.point, NormKind.DAY) ** 2))
                for x, y in zip(xs, ys))
    checks.append(_check("day-norm-identity", ident, 1e-12, ident <= 1e-12))

    rect = check_rectangle(pair, cfg.samples, seed=cfg.seed, tol=1e-12)
    checks.append(_check("rectangle-day", rect.max_violation, 1e-12, rect.ok))
    euclid = random_orthogonal_pair(np.random.default_rng(cfg.seed))
    rect_e = check_rectangle(euclid, cfg.samples, seed=cfg.seed, tol=1e-10)
    checks.append(_check("rectangle-euclidean", rect_e.max_violation, 1e-10, rect_e.ok))

    uc_worst = 0.0
    for _ in range(N_UC_TRIPLES):
        rep = check_property_uc(pair, *uc_sequences(pair, CONVERGENCE_CLAIM_HORIZON, rng=rng))
        uc_worst = max(uc_worst, rep.max_violation)
    checks.append(_check("uc-modulus", uc_worst, 1e-10, uc_worst <= 1e-10))

    k_hat = estimate_asymptotic_constants(T, K_MAX, 500, seed=cfg.seed)
    k_rows = [{"n": n, "k_hat": float(k_hat[n - 1]), "k_bound": T.k_bound(n)}
              for n in range(1, K_MAX + 1)]
    k_excess = max(r["k_hat"] - r["k_bound"] for r in k_rows)
    checks.append(_check("k-hat-vs-bound", k_excess, 1e-7, k_excess <= 1e-7))
    p_tail = abs(day_coefficients(2500).partial_product(2500) - 0.5)
    checks.append(_check("P2500-limit", p_tail, 1e-4, p_tail <= 1e-4))

    zero_a = LabeledPoint(BlockVector.zeros(cfg.depth), Side.A)
    bpp = best_proximity_residual(T, zero_a)
    checks.append(_check("best-proximity-at-zero", abs(bpp), 1e-12, abs(bpp) <= 1e-12))

    enforce = cfg.horizon >= CONVERGENCE_CLAIM_HORIZON
    starts = sample_hull_points(pair.A, rng, N_STARTS)
    orbit_rows = []
    for i, st in enumerate(starts):
        tr = run_u_sequence(T, LabeledPoint(st.point, Side.A), cfg.horizon)
        orbit_rows.append({"start": i, "final_residual": tr.final_residual,
                           "final_gap": float(tr.gaps[-1]),
                           "min_residual": float(tr.residuals.min())})
    worst_res = max(r["final_residual"] for r in orbit_rows)
    worst_gap = max(r["final_gap"] for r in orbit_rows)
    checks.append(_check("u-orbit-final-residual", worst_res, cfg.tol,
                         worst_res <= cfg.tol or not enforce, enforced=enforce))
    checks.append(_check("u-orbit-final-gap", worst_gap, cfg.tol,
                         worst_gap <= cfg.tol or not enforce, enforced=enforce))

    S = squared_map_preserve(T)
    pres_worst = 0.0
    for st in starts:
        res = run_preserve_experiment(S, LabeledPoint(st.point, Side.A), cfg.horizon, tol=cfg.tol)
        pres_worst = max(pres_worst, res.residual_a, res.residual_b, res.distance_error)
    checks.append(_check("preserve-fixed-points", pres_worst, cfg.tol,
                         pres_worst <= cfg.tol or not enforce, enforced=enforce))

    sym = radius_symmetry_diagnostic(T, zero_a, zero_a, cfg.horizon, cfg.window)

    return {
        "config": asdict(cfg),
        "dist": pair.d,
        "checks": checks,
        "asymptotic_constants": k_rows,
        "orbits": orbit_rows,
        "radius_symmetry_at_zero": asdict(sym),
        "passed": all(c["passed"] for c in checks),
    }


def cmd_reproduce(cfg: ExperimentConfig) -> int:
    report = reproduce(cfg)
    if cfg.format == "json":
        _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", cfg)
    else:
        _emit(_table_csv(report["checks"], ["check", "value", "threshold", "passed", "enforced"]), cfg)
    failed = [c["check"] for c in report["checks"] if not c["passed"]]
    if failed:
        log.error("failed checks: %s", ", ".join(failed))
        return EXIT_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

PAIRS = ("day", "euclidean", "supnorm-demo", "onenorm-demo")
PROPERTIES = ("sharpness", "rectangle", "uc", "hilbert-orthogonality")


def run_check(pair_name: str, prop: str, cfg: ExperimentConfig):
    if pair_name not in PAIRS:
        raise ConfigError(f"unknown pair {pair_name!r}; choose from {', '.join(PAIRS)}")
    if prop not in PROPERTIES:
        raise ConfigError(f"unknown property {prop!r}; choose from {', '.join(PROPERTIES)}")
    if pair_name.endswith("-demo"):
        if prop != "sharpness":
            raise ConfigError("the strict-convexity demo pairs only support the sharpness check")
        norm = NormKind.SUP_2D if pair_name == "supnorm-demo" else NormKind.ONE_2D
        return strict_convexity_demo(norm, seed=cfg.seed).sharpness
    pair = day_pair(cfg.depth) if pair_name == "day" else \
        random_orthogonal_pair(np.random.default_rng(cfg.seed))
    if prop == "sharpness":
        return check_sharpness(pair, min(cfg.samples, 50), seed=cfg.seed)
    if prop == "rectangle":
        return check_rectangle(pair, cfg.samples, seed=cfg.seed)
    if prop == "uc":
        rng = np.random.default_rng(cfg.seed)
        return check_property_uc(pair, *uc_sequences(pair, CONVERGENCE_CLAIM_HORIZON, rng=rng),
                                 seed=cfg.seed)
    if pair.norm is not NormKind.EUCLIDEAN:
        raise ConfigError("hilbert-orthogonality needs a Euclidean pair")
    return check_hilbert_orthogonality(pair, cfg.samples, seed=cfg.seed)


def cmd_check(pair_name: str, prop: str, cfg: ExperimentConfig) -> int:
    report = run_check(pair_name, prop, cfg)
    if cfg.format == "json":
        _emit(report.to_json() + "\n", cfg)
    else:
        d = report.to_dict()
        _emit(_table_csv([d], ["property", "verdict", "max_violation", "samples", "seed"]), cfg)
    return EXIT_OK if report.ok else EXIT_FAILED


# ---------------------------------------------------------------------------
# trace / coefficients
# ---------------------------------------------------------------------------


def parse_start(spec: str, depth: int) -> BlockVector:
    """``zero``, ``a<n>`` (n >= 2) or comma-separated weights on ``a_2, a_3, ...``."""
    spec = spec.strip().lower()
    if spec == "zero":
        return BlockVector.zeros(depth)
    if spec.startswith("a") and spec[1:].lstrip("_").isdigit():
        n = int(spec[1:].lstrip("_"))
        if not 2 <= n <= depth:
            raise ConfigError(f"a_{n} is not a generator of A at depth {depth}")
        return unit_block_vector(n, depth)
    try:
        weights = [float(w) for w in spec.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse start {spec!r}") from exc
    if len(weights) > depth - 1:
        raise ConfigError(f"at most {depth - 1} weights fit at depth {depth}")
    lead = np.zeros(depth)
    lead[1:1 + len(weights)] = weights
    return BlockVector.from_leading(lead, depth)


def cmd_trace(start: str, cfg: ExperimentConfig) -> int:
    pair = day_pair(cfg.depth)
    T = day_example_map(pair)
    x = LabeledPoint(parse_start(start, cfg.depth), Side.A)
    check_day_member(x, cfg.depth)
    trace = run_u_sequence(T, x, cfg.horizon, reference=BlockVector.zeros(cfg.depth))
    _emit(trace.to_csv() if cfg.format == "csv" else trace.to_json() + "\n", cfg)
    return EXIT_OK


def cmd_coefficients(n_max: int, cfg: ExperimentConfig) -> int:
    co = day_coefficients(n_max)
    rows = [{"n": n, "b_n": float(co.b[n]), "c_n": float(co.c[n]) if n >= 2 else None,
             "P_n": co.partial_product(n)} for n in range(1, n_max + 1)]
    if cfg.format == "json":
        _emit(json.dumps(rows, indent=2) + "\n", cfg)
    else:
        _emit(_table_csv(rows, ["n", "b_n", "c_n", "P_n"]), cfg)
    return EXIT_OK


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--depth", type=int, help="truncation depth N")
    common.add_argument("--horizon", type=int, help="orbit horizon H")
    common.add_argument("--window", type=int, help="trailing window W for radius estimates")
    common.add_argument("--samples", type=int, help="sample count for property checks")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float, help="convergence tolerance")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--out", help="output file (default: stdout)")

    parser = argparse.ArgumentParser(prog="bestprox", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("reproduce-paper", parents=[common],
                   help="run every experiment on the Day example")
    p = sub.add_parser("check", parents=[common], help="run one property check")
    p.add_argument("pair", choices=PAIRS)
    p.add_argument("property", choices=PROPERTIES)
    p = sub.add_parser("trace", parents=[common], help="u_n trace of the Day example map")
    p.add_argument("start", help="zero, a<n>, or comma-separated weights on a_2, a_3, ...")
    p = sub.add_parser("coefficients", parents=[common], help="b_n, c_n, P_n table")
    p.add_argument("--n-max", type=int, default=K_MAX)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "reproduce-paper":
            return cmd_reproduce(cfg)
        if args.command == "check":
            return cmd_check(args.pair, args.property, cfg)
        if args.command == "trace":
            return cmd_trace(args.start, cfg)
        if args.n_max < 2:
            raise ConfigError("--n-max must be at least 2")
        return cmd_coefficients(args.n_max, cfg)
    except (ConfigError, DomainError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except SolverError as exc:
        log.error("solver failure: %s (certified bounds [%.3g, %.3g])", exc, exc.lower, exc.upper)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
