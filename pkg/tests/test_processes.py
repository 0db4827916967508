import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htslb import build_config
from htslb.errors import InfeasibleMoments, InvalidSpec
from htslb.processes import (COMMON, INDEPENDENT, ProcessSpec, build_arrival_process,
                             build_service_process, draw_values, sample, solve_three_point)


def moments_by_linear_solve(mean, variance):
    M = np.array([[1.0, 1.0, 1.0], [0.0, 1.0, 2.0], [0.0, 1.0, 4.0]])
    return np.linalg.solve(M, [1.0, mean, variance + mean**2])


def test_three_point_example():
    spec = solve_three_point(1.0, 0.5)
    assert spec.support == (0, 1, 2)
    np.testing.assert_allclose(spec.pmf, moments_by_linear_solve(1.0, 0.5), atol=1e-15)
    np.testing.assert_allclose(spec.pmf, [0.25, 0.5, 0.25], atol=1e-15)
    assert spec.mean == pytest.approx(1.0, abs=1e-12)
    assert spec.variance == pytest.approx(0.5, abs=1e-12)


def test_three_point_zero_variance_is_point_mass():
    spec = solve_three_point(1.0, 0.0)
    assert spec.prob(1) == 1.0
    assert spec.prob(0) == 0.0 and spec.prob(2) == 0.0


def test_three_point_infeasible():
    assert np.any(moments_by_linear_solve(1.0, 2.0) < 0)
    with pytest.raises(InfeasibleMoments):
        solve_three_point(1.0, 2.0)


def test_three_point_scaled_unit():
    spec = solve_three_point(4.0, 8.0, unit=4)
    assert spec.support == (0, 4, 8)
    np.testing.assert_allclose(spec.pmf, [0.25, 0.5, 0.25], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(m=st.floats(0.0, 2.0), frac=st.floats(0.0, 1.0))
def test_three_point_exact_moments(m, frac):
    # feasible variances on {0,1,2} for mean m span [vmin, m(2-m)]
    vmin = (m - np.floor(m)) * (np.ceil(m) - m) if m < 2 else 0.0
    v = vmin + frac * (m * (2 - m) - vmin)
    spec = solve_three_point(m, v)
    pmf = np.array(spec.pmf)
    assert np.all(pmf >= 0) and abs(pmf.sum() - 1) < 1e-12
    mean = float(np.dot([0, 1, 2], pmf))
    assert abs(mean - m) < 1e-10
    assert abs(float(np.dot(np.array([0, 1, 2]) ** 2, pmf)) - mean**2 - v) < 1e-10


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        ProcessSpec((), ())
    with pytest.raises(InvalidSpec):
        ProcessSpec((0, 1), (0.5, 0.6))
    with pytest.raises(InvalidSpec):
        ProcessSpec((1, 0), (0.5, 0.5))
    with pytest.raises(InvalidSpec):
        ProcessSpec((0, 1), (0.5, 0.5), mean=0.7)


def convolution_variance_by_enumeration(spec, n):
    vals, probs = spec.support, spec.pmf
    mean = second = 0.0
    for combo in itertools.product(range(len(vals)), repeat=n):
        p = np.prod([probs[i] for i in combo])
        s = sum(vals[i] for i in combo)
        mean += p * s
        second += p * s * s
    return second - mean**2


def test_arrival_linear_example():
    cfg = build_config(dict(N=4, alpha=3, sigma_a2=0.5, warmup=0, horizon=1))
    assert cfg.lambda_total == pytest.approx(3.9375)
    proc = build_arrival_process(cfg)
    assert proc.component.mean == pytest.approx(0.984375, abs=1e-12)
    assert convolution_variance_by_enumeration(proc.component, 4) == pytest.approx(2.0, abs=1e-12)
    assert proc.total_variance == pytest.approx(2.0, abs=1e-12)
    pmf = proc.total_pmf()
    assert pmf[0] > 0 and len(pmf) - 1 == cfg.A_max == 8


def test_arrival_quadratic_example():
    cfg = build_config(dict(N=4, epsilon_override=0.25, mu_total=4.25, regime="quadratic",
                            sigma_a2=0.5, warmup=0, horizon=1))
    proc = build_arrival_process(cfg)
    pmf = proc.total_pmf()
    assert set(np.flatnonzero(pmf)) == {0, 4, 8}
    values = np.arange(len(pmf))
    var = np.dot(values**2, pmf) - np.dot(values, pmf) ** 2
    assert var == pytest.approx(16 * proc.component.variance) == pytest.approx(8.0)


def test_arrival_point_mass_and_idle_requirement():
    cfg = build_config(dict(N=2, epsilon_override=0.5, mu_total=2.5, warmup=0, horizon=1))
    flat = dataclasses.replace(cfg, sigma_a2=0.0)
    proc = build_arrival_process(flat, require_idle_mass=False)
    assert proc.component.prob(1) == 1.0
    with pytest.raises(InfeasibleMoments):
        build_arrival_process(flat)


def test_service_linear_example():
    cfg = build_config(dict(N=8, alpha=2, mu_total=8, nu_s2=0.5, warmup=0, horizon=1))
    proc = build_service_process(cfg)
    assert proc.coupling == INDEPENDENT and len(proc.specs) == 8
    for s in proc.specs:
        np.testing.assert_allclose(s.pmf, [0.25, 0.5, 0.25], atol=1e-15)
    assert proc.total_variance == pytest.approx(4.0)


def test_service_quadratic_example():
    cfg = build_config(dict(N=8, alpha=3, regime="quadratic", nu_s2=0.25, sigma_a2=0.5,
                            warmup=0, horizon=1))
    proc = build_service_process(cfg)
    assert proc.coupling == COMMON and len(proc.specs) == 1
    assert proc.total_variance == pytest.approx(16.0)


def test_service_deterministic():
    cfg = build_config(dict(N=3, alpha=2, nu_s2=0.0, warmup=0, horizon=1))
    proc = build_service_process(cfg)
    assert all(s.prob(1) == 1.0 for s in proc.specs)


def test_explicit_pmfs_from_config():
    cfg = build_config(dict(N=1, epsilon_override=0.1, mu_total=1.0,
                            arrival_pmf=([0, 1, 3], [0.4, 0.45, 0.15]),
                            service_pmf=([0, 1, 2], [0.25, 0.5, 0.25]),
                            warmup=0, horizon=1))
    assert cfg.sigma_a2 == pytest.approx(ProcessSpec((0, 1, 3), (0.4, 0.45, 0.15)).variance)
    assert cfg.A_max == 3


@pytest.mark.parametrize("regime,power", [("linear", 1), ("quadratic", 2)])
def test_variance_scaling_across_n(regime, power):
    ratios = []
    for N in (2, 4, 8, 16):
        cfg = build_config(dict(N=N, alpha=3, regime=regime, sigma_a2=0.5, nu_s2=0.5,
                                warmup=0, horizon=1))
        arr = build_arrival_process(cfg)
        pmf = arr.total_pmf()
        values = np.arange(len(pmf))
        var = np.dot(values**2, pmf) - np.dot(values, pmf) ** 2
        ratios.append(var / N**power)
        assert pmf[0] > 0 and len(pmf) - 1 <= cfg.A_max
    np.testing.assert_allclose(ratios, 0.5, atol=1e-10)


def test_third_moment_exact_convolution():
    cfg = build_config(dict(N=2, epsilon_override=0.5, mu_total=2.5, warmup=0, horizon=1))
    spec = solve_three_point(1.0, 0.5)
    proc = dataclasses.replace(build_arrival_process(cfg), component=spec)
    np.testing.assert_allclose(proc.total_pmf(), np.array([1, 4, 6, 4, 1]) / 16)
    assert proc.total_moment(3) == pytest.approx(224 / 16)


def test_sample_point_mass(rng):
    spec = ProcessSpec((1,), (1.0,))
    assert all(sample(spec, rng) == 1 for _ in range(100))


def test_sample_two_point_mean(rng):
    spec = ProcessSpec((0, 2), (0.5, 0.5))
    draws = draw_values(spec, rng.random(10**6))
    assert abs(draws.mean() - 1.0) <= 4 * 1.0 / np.sqrt(10**6)
    few = [sample(spec, rng) for _ in range(2000)]
    assert set(few) <= {0, 2}


def test_sample_deterministic_given_state():
    spec = solve_three_point(0.9, 0.4)
    a = [sample(spec, np.random.default_rng(3)) for _ in range(5)]
    b = [sample(spec, np.random.default_rng(3)) for _ in range(5)]
    assert a == b


@pytest.mark.parametrize("mean,var", [(0.95, 0.5), (1.0, 0.5), (0.3, 0.25), (1.7, 0.3)])
def test_empirical_moments_match_pmf(rng, mean, var):
    spec = solve_three_point(mean, var)
    x = draw_values(spec, rng.random(10**6)).astype(float)
    n = x.size
    assert abs(x.mean() - spec.mean) <= 5 * np.sqrt(spec.variance / n)
    fourth = spec.raw_moment(4) - 4 * spec.mean * spec.raw_moment(3) \
        + 6 * spec.mean**2 * spec.raw_moment(2) - 3 * spec.mean**4
    se_var = np.sqrt((fourth - spec.variance**2) / n)
    assert abs(x.var() - spec.variance) <= 5 * se_var
