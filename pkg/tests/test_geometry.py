import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htslb.errors import EmptySample, InvalidParameter
from htslb.geometry import (cone_generators, decomposition_checks, in_cone, nnls,
                            perp_norms, project_to_cone, ssc_moments)

from .oracles import cone_projection_by_enumeration

GAMMAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def assert_invariants(x, dec, gamma):
    B = cone_generators(x.size, gamma)
    np.testing.assert_allclose(dec.parallel + dec.perp, x, rtol=0, atol=1e-9)
    assert np.all(dec.weights >= 0)
    np.testing.assert_allclose(B.T @ dec.weights, dec.parallel, rtol=0, atol=1e-9)
    assert abs(dec.perp @ dec.parallel) <= 1e-8
    assert np.all(B @ dec.perp <= 1e-8)


def test_generators_examples():
    np.testing.assert_array_equal(cone_generators(3, 0.0), np.eye(3))
    np.testing.assert_array_equal(cone_generators(2, 1.0), np.ones((2, 2)))
    np.testing.assert_array_equal(cone_generators(2, 0.5), [[1, 0.5], [0.5, 1]])


@pytest.mark.parametrize("N,gamma", [(0, 0.5), (2, -0.1), (2, 1.5), (2.5, 0.5)])
def test_generators_invalid(N, gamma):
    with pytest.raises(InvalidParameter):
        cone_generators(N, gamma)


def test_projection_examples():
    d = project_to_cone([3, 1], 1.0)
    np.testing.assert_allclose(d.parallel, [2, 2])
    np.testing.assert_allclose(d.perp, [1, -1])
    d = project_to_cone([3, -1], 0.0)
    np.testing.assert_array_equal(d.parallel, [3, 0])
    np.testing.assert_array_equal(d.perp, [0, -1])
    d = project_to_cone([1, 0.5], 0.5)
    np.testing.assert_allclose(d.parallel, [1, 0.5], atol=1e-12)
    assert d.perp_norm2 < 1e-12


@pytest.mark.parametrize("x", [[np.nan, 1.0], [np.inf], []])
def test_projection_rejects_bad_input(x):
    with pytest.raises(InvalidParameter):
        project_to_cone(x, 0.5)


def test_in_cone_examples():
    assert in_cone([4.0, 4.0, 4.0], 1.0)
    assert not in_cone([1.0, 0.0], 1.0)
    for g in GAMMAS:
        assert in_cone(cone_generators(4, g)[1], g)


def test_oracle_equivalence():
    rng = np.random.default_rng(3)
    for N in range(1, 7):
        for g in GAMMAS:
            for _ in range(100):
                x = rng.normal(scale=3.0, size=N)
                dec = project_to_cone(x, g)
                ref = cone_projection_by_enumeration(x, g)
                assert np.linalg.norm(dec.parallel - ref) <= 1e-7
                assert_invariants(x, dec, g)
                assert all(decomposition_checks(x, dec, g).values())


def test_nonexpansive_and_idempotent():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        N = int(rng.integers(1, 17))
        g = float(rng.choice(GAMMAS + (float(rng.random()),)))
        x, y = rng.normal(scale=5, size=(2, N))
        px = project_to_cone(x, g).parallel
        py = project_to_cone(y, g).parallel
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-9
        np.testing.assert_allclose(project_to_cone(px, g).parallel, px, rtol=0, atol=1e-9)


vectors = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_special_cases(xs):
    x = np.array(xs)
    np.testing.assert_array_equal(project_to_cone(x, 0.0).parallel, np.maximum(x, 0))
    p1 = project_to_cone(x, 1.0).parallel
    assert np.all(p1 == p1[0])


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(0.0, 0.99))
def test_invariants_property(xs, g):
    x = np.array(xs)
    assert_invariants(x, project_to_cone(x, g), g)


def test_large_n_converges():
    x = np.random.default_rng(0).normal(size=256)
    dec = project_to_cone(x, 0.3)
    assert all(decomposition_checks(x, dec, 0.3).values())


def test_nnls_matches_unconstrained_when_interior():
    A = np.array([[2.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    w = np.array([0.5, 2.0])
    sol, res = nnls(A, A @ w)
    np.testing.assert_allclose(sol, w, atol=1e-12)
    assert res < 1e-12


def test_perp_norms_vectorized_agree():
    X = np.random.default_rng(8).integers(0, 10, size=(50, 5)).astype(float)
    for g in (0.0, 1.0):
        expect = [project_to_cone(row, g).perp_norm2 for row in X]
        np.testing.assert_allclose(perp_norms(X, g), expect, atol=1e-12)


def test_ssc_examples():
    line = np.repeat(np.arange(5.0)[:, None], 3, axis=1)
    for r in (1, 2, 3):
        assert ssc_moments(line, 1.0, r).value == 0.0
    m = ssc_moments([[1.0, -1.0]], 1.0, 2)
    assert m.value == pytest.approx(2.0) and m.n == 1


def test_ssc_errors():
    with pytest.raises(EmptySample):
        ssc_moments(np.empty((0, 3)), 1.0)
    with pytest.raises(InvalidParameter):
        ssc_moments([[1.0, 2.0]], 1.0, r=0)


def test_ssc_two_seed_reproducibility():
    from htslb import build_config, make_policy, run
    cfg = build_config(dict(N=4, alpha=2.0, warmup=20000, post_warmup=400000))
    pol = make_policy("jsq")
    a = ssc_moments(run(cfg, pol, seed=1).states, 1.0, 2)
    b = ssc_moments(run(cfg, pol, seed=2).states, 1.0, 2)
    assert np.isfinite(a.value) and np.isfinite(b.value)
    assert abs(a.value - b.value) <= 4 * np.hypot(a.se, b.se)
