import csv
import io
import json
import math

import numpy as np
import pytest

from bestprox.convex import contains, sample_hull_points
from bestprox.iterate import (
    TRACE_SCHEMA,
    best_proximity_residual,
    estimate_radius,
    radius_symmetry_diagnostic,
    run_preserve_experiment,
    run_u_sequence,
)
from bestprox.maps import (
    DomainError,
    LabeledPoint,
    Mode,
    RelativeMap,
    Side,
    identity_map,
    iterate_map,
    squared_map_preserve,
)
from bestprox.pairs import make_parallel_pair
from bestprox.spaces import BlockVector, unit_block_vector

from conftest import leading_vector


def A(p):
    return LabeledPoint(p, Side.A)


def B(p):
    return LabeledPoint(p, Side.B)


@pytest.fixture(scope="module")
def zero():
    return BlockVector.zeros(32)


class TestUSequence:
    def test_zero_start(self, T32, zero):
        tr = run_u_sequence(T32, A(zero), 20)
        assert np.all(tr.residuals == 0.0) and np.all(tr.gaps == 0.0)
        assert all(p.point == zero and p.side is Side.A for p in tr.points)

    def test_horizon_one(self, pair32, T32):
        x = A(unit_block_vector(3, 32))
        tr = run_u_sequence(T32, x, 1)
        assert tr.points[0].point == T32(B(x.point + pair32.h)).point

    def test_matches_definition(self, pair32, T32, rng):
        for p in sample_hull_points(pair32.A, rng, 5):
            x = A(p.point)
            xp = x.shifted(pair32)
            tr = run_u_sequence(T32, x, 12)
            for n in range(1, 13):
                want = iterate_map(T32, xp if n % 2 else x, n)
                assert tr.points[n - 1].point == want.point
                assert tr.points[n - 1].side is want.side

    def test_side_law_by_membership(self, pair32, T32, rng):
        # u_n stays on the side of its start: odd n map x + h (in B) an odd
        # number of times, even n map x an even number of times
        x = A(sample_hull_points(pair32.A, rng, 1)[0].point)
        for p in run_u_sequence(T32, x, 10).points:
            assert p.side is Side.A and contains(pair32.A, p.point, atol=1e-6)
        y = B(x.point + pair32.h)
        for p in run_u_sequence(T32, y, 10).points:
            assert p.side is Side.B and contains(pair32.B, p.point, atol=1e-6)

    def test_a2_converges(self, T32):
        tr = run_u_sequence(T32, A(unit_block_vector(2, 32)), 200)
        assert tr.final_residual <= 1e-6

    def test_invariants_and_envelope(self, pair32, T32, rng):
        for p in sample_hull_points(pair32.A, rng, 50):
            tr = run_u_sequence(T32, A(p.point), 200)
            assert tr.residuals.min() >= -1e-7 and tr.gaps.min() >= -1e-7
            env = np.minimum.accumulate(tr.residuals)
            assert np.all(np.diff(env) <= 0.0)
            assert tr.gaps[-1] <= 1e-6

    def test_deterministic(self, T32):
        x = A(leading_vector([0, 0.3, 0.2, 0.1], 32))
        t1, t2 = run_u_sequence(T32, x, 30), run_u_sequence(T32, x, 30)
        assert np.array_equal(t1.residuals, t2.residuals)
        assert t1.to_csv() == t2.to_csv()

    def test_domain_error_names_step(self, pair32, T32):
        # flipping the tag without moving the point leaves the domain at once
        flip = RelativeMap(Mode.SWAP, lambda x: T32(LabeledPoint(x.point, x.side.other)),
                           lambda n: 1.0, pair32)
        with pytest.raises(DomainError, match="at step 1"):
            run_u_sequence(flip, A(unit_block_vector(2, 32)), 3)

    def test_argument_errors(self, pair32, T32, zero):
        with pytest.raises(ValueError):
            run_u_sequence(T32, A(zero), 0)
        with pytest.raises(ValueError):
            run_u_sequence(squared_map_preserve(T32), A(zero), 3)


class TestSerialisation:
    def test_csv(self, T32):
        text = run_u_sequence(T32, A(unit_block_vector(2, 32)), 5, reference=unit_block_vector(1, 32)).to_csv()
        lines = text.splitlines()
        assert lines[0] == TRACE_SCHEMA
        rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
        assert list(rows[0]) == ["n", "side", "residual", "gap", "distance_to_reference"]
        assert [r["n"] for r in rows] == ["1", "2", "3", "4", "5"]
        assert float(rows[0]["distance_to_reference"]) >= 1.0 - 1e-12

    def test_json(self, T32, zero):
        data = json.loads(run_u_sequence(T32, A(zero), 3).to_json())
        assert data["horizon"] == 3 and len(data["rows"]) == 3
        assert data["rows"][0]["distance_to_reference"] is None


class TestBestProximityResidual:
    def test_zero(self, T32, zero):
        assert best_proximity_residual(T32, A(zero)) == 0.0

    def test_a2(self, T32):
        assert best_proximity_residual(T32, A(unit_block_vector(2, 32))) == pytest.approx(
            math.sqrt(3.0) - 1.0, abs=1e-14)

    def test_identity_on_degenerate_pair(self, pair32):
        same = make_parallel_pair(pair32.A, BlockVector.zeros(32))
        assert best_proximity_residual(identity_map(same), A(unit_block_vector(5, 32))) == 0.0


class TestRadius:
    def test_zero_cycle(self, pair32, T32, zero):
        r = estimate_radius(T32, A(zero), B(pair32.h), 20, 5)
        assert r.value == pytest.approx(1.0, abs=1e-15)

    def test_converged_orbit_radius_is_d(self, pair32, T32):
        r = estimate_radius(T32, A(unit_block_vector(2, 32)), B(pair32.h), 400, 50)
        assert r.value == pytest.approx(pair32.d, abs=1e-6)

    def test_trailing_window_definition(self, pair32, T32, rng):
        x = A(sample_hull_points(pair32.A, rng, 1)[0].point)
        target = B(leading_vector([1, 0, 0.5, 0.5], 32))
        r = estimate_radius(T32, x, target, 30, 7)
        tr = run_u_sequence(T32, x, 30)
        want = max(pair32.dist(p.point, target.point) for p in tr.points[-7:])
        assert r.value == want and r.value >= pair32.d - 1e-7

    def test_argument_errors(self, pair32, T32, zero):
        with pytest.raises(ValueError):
            estimate_radius(T32, A(zero), B(pair32.h), 5, 6)
        with pytest.raises(ValueError):
            estimate_radius(T32, A(zero), A(zero), 5, 2)


class TestSymmetry:
    def test_zero(self, T32, zero):
        s = radius_symmetry_diagnostic(T32, A(zero), A(zero), 20, 5)
        assert s.r_xy == pytest.approx(1.0) and s.r_yx == pytest.approx(1.0) and s.gap == 0.0

    def test_minimal_horizon(self, pair32, T32):
        x = A(leading_vector([0, 0.4, 0.3], 32))
        y = A(leading_vector([0, 0.1, 0.0, 0.6], 32))
        s = radius_symmetry_diagnostic(T32, x, y, 1, 1)
        yh = y.shifted(pair32)
        u1x = run_u_sequence(T32, x, 1).points[0].point
        u1y = run_u_sequence(T32, yh, 1).points[0].point
        assert s.r_xy == pair32.dist(u1x, yh.point)
        assert s.r_yx == pair32.dist(u1y, x.point)
        assert s.gap == abs(s.r_xy - s.r_yx)

    def test_same_start_gap_vanishes(self, T32):
        x = A(leading_vector([0, 0.5, 0.25], 32))
        assert radius_symmetry_diagnostic(T32, x, x, 400, 50).gap <= 1e-6


class TestPreserveExperiment:
    def test_zero(self, pair32, T32, zero):
        res = run_preserve_experiment(squared_map_preserve(T32), A(zero), 10)
        assert res.converged and res.fixed_a.point == zero and res.fixed_b.point == pair32.h
        assert res.pair_distance == 1.0

    def test_a2(self, pair32, T32):
        res = run_preserve_experiment(squared_map_preserve(T32), A(unit_block_vector(2, 32)), 400)
        assert res.converged and res.distance_error <= 1e-6
        assert res.fixed_a.point.allclose(BlockVector.zeros(32), atol=1e-6)

    def test_identity_degenerate(self, pair32):
        same = make_parallel_pair(pair32.A, BlockVector.zeros(32))
        res = run_preserve_experiment(identity_map(same), A(unit_block_vector(7, 32)), 5)
        assert res.converged and res.pair_distance == 0.0

    def test_short_horizon_reports(self, T32):
        res = run_preserve_experiment(squared_map_preserve(T32), A(unit_block_vector(2, 32)), 1)
        assert not res.converged and res.residual_a > 1e-6

    def test_needs_preserve_mode(self, T32, zero):
        with pytest.raises(ValueError):
            run_preserve_experiment(T32, A(zero), 3)
