"""Linear flows on the torus, density decisions and the Diophantine lemmas."""
import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from forestlab import (FlowSpec, HypothesisViolated, SearchBudgetExceeded, ZeroPivot, filling_time,
                       integer_relation, is_delta_dense)
from forestlab.linalg import projective_distance
from forestlab.torus import (
    GOLDEN, check_transference_hypothesis, dirichlet_witness, discrete_flow, flow_segments,
    lft3_hypothesis, lft4_witness_search, pivot_index, torus_distance, transference_apply,
    transference_bounds, transference_constant,
)


def sup_seg_dist(p, s, v):
    """Exact sup-norm distance from p to {s + lam v : 0 <= lam <= 1}.

    The objective is a convex piecewise-linear function of lam, so its
    minimum sits at an endpoint or where two of the lines +-(p_i - s_i - lam v_i)
    cross."""
    c = p - s
    lines = [(ci, -vi) for ci, vi in zip(c, v)] + [(-ci, vi) for ci, vi in zip(c, v)]
    cand = [0.0, 1.0]
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            (a1, b1), (a2, b2) = lines[i], lines[j]
            if b1 != b2:
                lam = (a2 - a1) / (b1 - b2)
                if 0.0 <= lam <= 1.0:
                    cand.append(lam)
    return min(max(a + b * lam for a, b in lines) for lam in cand)


def torus_dist_oracle(p, starts, vecs):
    n = len(p)
    best = math.inf
    for shift in np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * n)).T.reshape(-1, n):
        for s, v in zip(starts, vecs):
            best = min(best, sup_seg_dist(p, s + shift, v))
    return best


def sampled_flow_gap(u, T, res, step=2e-3):
    """Largest sup-distance from a res^n grid to points sampled along the flow."""
    u = np.asarray(u, float)
    t = np.arange(-T, T + step, step)
    pts = np.mod(t[:, None] * u, 1.0)
    tree = cKDTree(pts, boxsize=1.0)
    g = (np.arange(res) + 0.5) / res
    G = np.stack(np.meshgrid(*[g] * u.size, indexing="ij"), -1).reshape(-1, u.size)
    d, _ = tree.query(G, p=np.inf)
    return float(d.max())


def _random_unit(rng, n):
    u = rng.standard_normal(n)
    return u / np.linalg.norm(u)


# basics

def test_pivot_ties_go_to_largest_index():
    assert pivot_index([1.0, -1.0]) == 1
    assert pivot_index([0.2, -0.9, 0.1]) == 1


def test_flowspec_validation():
    with pytest.raises(ValueError):
        FlowSpec([1.0, 1.0], 0.1, T=1)
    with pytest.raises(ValueError):
        FlowSpec.make([1.0, 1.0], 0.0, T=1)
    with pytest.raises(ValueError):
        FlowSpec.make([1.0, 1.0], 0.6, T=1)
    with pytest.raises(ValueError):
        FlowSpec.make([1.0], 0.1, T=1)


def test_discrete_flow_examples():
    assert np.allclose(discrete_flow([1.0, 2.0], 2), [[0.0], [0.5]])
    assert np.allclose(discrete_flow([0.0, 0.0, 1.0], 7), [[0.0, 0.0]])
    u = np.array([1.0, GOLDEN])
    pts = discrete_flow(u, 10)
    assert len(pts) == 21
    direct = np.sort(np.mod(np.arange(-10, 11) / GOLDEN, 1.0))
    assert np.allclose(np.sort(pts[:, 0]), direct, atol=1e-12)


def test_discrete_flow_cardinality_matches_relations(rng):
    for _ in range(100):
        if rng.random() < 0.5:
            r = rng.integers(-9, 10) / rng.integers(1, 12)
        else:
            r = rng.uniform(-1, 1)
        u = np.array([r, 1.0])
        S = int(rng.integers(1, 8))
        full = len(discrete_flow(u, S)) == 2 * S + 1
        assert full == (integer_relation([r, 1.0], 2 * S) is None)


def test_zero_pivot():
    with pytest.raises(ZeroPivot):
        discrete_flow([0.0, 0.0], 3)


def test_flow_segments_cover_the_orbit(rng):
    for _ in range(10):
        u = _random_unit(rng, 3)
        T = float(rng.uniform(0.5, 5))
        starts, vecs = flow_segments(u, T)
        assert np.all(starts >= 0) and np.all(starts <= 1)
        assert np.all(starts + vecs >= -1e-12) and np.all(starts + vecs <= 1 + 1e-12)
        assert np.sum(np.linalg.norm(vecs, axis=1)) == pytest.approx(2 * T)
        t = rng.uniform(-T, T, 50)
        d = torus_distance(np.mod(t[:, None] * u, 1.0), starts, vecs)
        assert np.all(d < 1e-9)


def test_torus_distance_matches_exact_oracle(rng):
    for _ in range(30):
        n = int(rng.integers(2, 4))
        starts, vecs = flow_segments(_random_unit(rng, n), float(rng.uniform(0.3, 2)))
        p = rng.random(n)
        assert torus_distance(p, starts, vecs)[0] == pytest.approx(
            torus_dist_oracle(p, starts, vecs), abs=1e-12)


# density decisions

def test_vertical_circle_not_dense():
    rep = is_delta_dense(FlowSpec.make([0.0, 1.0], 0.49, T=3))
    assert rep.certified_not_dense
    assert rep.point[0] == pytest.approx(0.5)
    assert rep.distance == pytest.approx(0.5)


def test_vertical_circle_dense_at_half():
    assert is_delta_dense(FlowSpec.make([0.0, 1.0], 0.5, T=3)).dense


def test_golden_flow_dense_matches_grid_oracle():
    u = np.array([1.0, GOLDEN]) / math.hypot(1.0, GOLDEN)
    rep = is_delta_dense(FlowSpec(u, 0.05, T=50))
    assert rep.dense
    assert sampled_flow_gap(u, 50, 400) <= 0.05 + 2e-3


def test_not_dense_reports_are_sound(rng):
    found = 0
    for _ in range(60):
        d = int(rng.integers(1, 3))
        u = _random_unit(rng, d + 1)
        T = float(rng.uniform(0.5, 6))
        delta = float(rng.choice([0.05, 0.1, 0.2]))
        rep = is_delta_dense(FlowSpec(u, delta, T=T))
        starts, vecs = flow_segments(u, T)
        if rep.certified_not_dense:
            found += 1
            assert torus_dist_oracle(rep.point, starts, vecs) >= delta
            assert rep.distance == pytest.approx(torus_dist_oracle(rep.point, starts, vecs), abs=1e-12)
        elif rep.dense and d == 1:
            assert sampled_flow_gap(u, T, 200, 1e-3) <= delta + 1e-3 + 1 / 400
    assert found > 0


def test_discrete_mode():
    assert is_delta_dense(FlowSpec.make([1.0, 2.0], 0.25, S=2), "discrete").dense
    rep = is_delta_dense(FlowSpec.make([1.0, 2.0], 0.2, S=2), "discrete")
    assert rep.certified_not_dense and rep.distance == pytest.approx(0.25)
    with pytest.raises(ValueError):
        is_delta_dense(FlowSpec.make([1.0, 2.0], 0.2, T=2), "discrete")
    with pytest.raises(ValueError):
        is_delta_dense(FlowSpec.make([1.0, 2.0], 0.2, S=2), "sideways")


def test_lft2_discrete_density_lifts(rng):
    for _ in range(150):
        d = int(rng.integers(1, 3))
        u = _random_unit(rng, d + 1)
        S = int(rng.integers(math.ceil((d + 1) ** (d / 2)) + 1, 30))
        delta = float(rng.choice([0.05, 0.1, 0.2]))
        if is_delta_dense(FlowSpec(u, delta, S=S), "discrete").dense:
            assert is_delta_dense(FlowSpec(u, delta, T=math.sqrt(d + 1) * S)).dense


# filling time

def test_filling_time_axis_is_infinite():
    assert filling_time([0.0, 1.0], 0.25) == math.inf


@pytest.mark.parametrize("delta", [0.3, 0.4])
def test_filling_time_diagonal_closed_form(delta):
    # the closed diagonal first becomes delta-dense when the two arms from
    # the origin cover the anti-diagonal gap: T* = sqrt(2)(1 - 2 delta)
    T = filling_time([1.0, 1.0], delta)
    assert T == pytest.approx(math.sqrt(2) * (1 - 2 * delta), rel=1e-2)


def test_filling_time_diagonal_small_delta_is_infinite():
    # the wrapped diagonal stays 1/4 away from (1/2, 0)
    assert filling_time([1.0, 1.0], 0.2) == math.inf


def test_filling_time_diagonal_tangent_is_undecided():
    # at delta = 1/4 the two wrapped neighbourhoods only touch at (1/2, 0),
    # which no finite subdivision can certify either way
    with pytest.raises(SearchBudgetExceeded):
        filling_time([1.0, 1.0], 0.25)


def test_filling_time_golden_is_optimal():
    u = [1.0, GOLDEN]
    ratios = [filling_time(u, 2.0 ** -j) * 2.0 ** -j for j in range(3, 8)]
    assert max(ratios) / min(ratios) < 8


def test_filling_time_trivial_half():
    assert filling_time([0.3, 0.7], 0.5) == 0.0


# Dirichlet and transference

def test_dirichlet_examples():
    assert dirichlet_witness([math.sqrt(2)], 5) == 5
    assert dirichlet_witness([1 / 3], 4) == 3


def test_dirichlet_bound_random(rng):
    for _ in range(200):
        r = rng.random(2)
        m = dirichlet_witness(r, 100)
        assert 1 <= m <= 100
        assert np.max(np.abs(m * r - np.rint(m * r))) <= 0.1 + 1e-12


def test_transference_golden_instance():
    C, m = transference_constant([GOLDEN], 3)
    assert m == 2 and C == pytest.approx(0.2360679775, abs=1e-9)
    b = transference_bounds([GOLDEN], C, 3)
    assert b.h == 1 and b.X_prime == 3 and b.C_prime == pytest.approx(C)
    x = transference_apply([GOLDEN], C, 3, [0.5])
    assert x == 1
    assert abs(GOLDEN - 0.5 - round(GOLDEN - 0.5)) == pytest.approx(0.118, abs=1e-3)


def test_transference_hypothesis_violation():
    with pytest.raises(HypothesisViolated) as err:
        transference_apply([0.5], 0.1, 3, [0.2])
    assert err.value.m == 2
    with pytest.raises(HypothesisViolated):
        check_transference_hypothesis([0.5], 0.1, 3)


def test_transference_near_half_many_targets(rng):
    r = [0.5 - 1e-4]
    C, _ = transference_constant(r, 3)
    b = transference_bounds(r, C, 3)
    for alpha in rng.random(1000):
        x = transference_apply(r, C, 3, [alpha])
        assert abs(x) <= b.X_prime
        err = abs(r[0] * x - alpha - round(r[0] * x - alpha))
        assert err <= b.C_prime + 1e-12


# LFT3 and the Diophantine witness

def test_lft3_examples():
    ok, m = lft3_hypothesis([0.0, 1.0], 5, 0.1)
    assert not ok and m == 1
    assert lft3_hypothesis([0.3, 1.0], 1, 1.0) == (True, None)
    u = np.array([1.0, GOLDEN])
    ok, _ = lft3_hypothesis(u, 25, 0.2)
    X = 25 ** 0.0 / 0.2
    vals = [abs(m / GOLDEN - round(m / GOLDEN)) for m in range(1, math.ceil(X))]
    assert ok == all(v >= 1 / 25 for v in vals)
    if ok:
        assert is_delta_dense(FlowSpec.make(u, 0.2, T=math.sqrt(2) * 25)).dense


def test_lft3_implies_density(rng):
    checked = 0
    for _ in range(200):
        d = int(rng.integers(1, 3))
        u = _random_unit(rng, d + 1)
        S = int(rng.integers(2, 30))
        delta = float(rng.choice([0.05, 0.1, 0.2]))
        ok, _ = lft3_hypothesis(u, S, delta)
        if ok:
            checked += 1
            assert is_delta_dense(FlowSpec(u, delta, T=math.sqrt(d + 1) * S)).dense
    assert checked > 0


def test_lft4_examples():
    w = lft4_witness_search([0.0, 1.0], 10, 0.1)
    assert w.q == (0, 1) and w.psi == 0.0
    w = lft4_witness_search([1.0, 1.0], 10, 0.1)
    assert w.q == (1, 1) and w.psi == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        lft4_witness_search([0.3, 0.4, 0.5], 2, 0.1)


def _brute_lft4(u, S, delta):
    d = len(u) - 1
    bound = S ** (1 - 1 / d) / delta
    qmax = math.ceil(bound) - 1
    for norm in range(1, qmax + 1):
        grid = np.stack(np.meshgrid(*[np.arange(-norm, norm + 1)] * (d + 1), indexing="ij"),
                        -1).reshape(-1, d + 1)
        grid = grid[np.max(np.abs(grid), axis=1) == norm]
        for q in grid:
            if projective_distance(u, q) < (d + 1) / (norm * S ** (1 / d)):
                return norm
    return None


def test_lft4_matches_brute_force(rng):
    for _ in range(40):
        d = int(rng.integers(1, 3))
        u = _random_unit(rng, d + 1)
        S = int(rng.integers(math.ceil((d + 1) ** (d / 2)) + 1, 12))
        delta = float(rng.choice([0.1, 0.2]))
        w = lft4_witness_search(u, S, delta)
        want = _brute_lft4(u, S, delta)
        assert (w is None) == (want is None)
        if w is not None:
            assert w.sup_norm == want
            assert w.sup_norm < w.norm_bound and w.psi < w.psi_bound


def test_not_dense_flow_has_witness(rng):
    for _ in range(200):
        d = int(rng.integers(1, 3))
        u = _random_unit(rng, d + 1)
        S = int(rng.integers(math.ceil((d + 1) ** (d / 2)) + 1, 51))
        delta = float(rng.choice([0.05, 0.1, 0.2]))
        rep = is_delta_dense(FlowSpec(u, delta, T=math.sqrt(d + 1) * S))
        if not rep.dense:
            w = lft4_witness_search(u, S, delta)
            assert w is not None
            assert w.sup_norm < S ** (1 - 1 / d) / delta
            assert projective_distance(u, w.q) < (d + 1) / (w.sup_norm * S ** (1 / d))
