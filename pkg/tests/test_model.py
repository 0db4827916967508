import dataclasses
import math

import numpy as np
import pytest

from htslb import build_config, predict_limit
from htslb.errors import DegenerateLimit, InfeasibleMoments, InfeasibleScaling, InvalidParameter
from htslb.model import Regime


def test_epsilon_from_alpha():
    cfg = build_config(dict(N=10, alpha=5, mu_total=10))
    assert cfg.epsilon == pytest.approx(1e-4, rel=1e-12)
    assert cfg.lambda_total == pytest.approx(9.9999, rel=1e-12)


def test_epsilon_override_single_server():
    cfg = build_config(dict(N=1, epsilon_override=0.05, mu_total=1))
    assert cfg.epsilon == 0.05
    assert cfg.lambda_total == pytest.approx(0.95)
    assert cfg.scale_factor == 0.05


@pytest.mark.parametrize("bad", [
    dict(N=2, alpha=1),
    dict(N=0, alpha=2),
    dict(N=2, alpha=2, gamma=1.5),
    dict(N=2, alpha=2, delta=0),
    dict(N=2, alpha=2, sigma_a2=-1),
    dict(N=2, alpha=2, warmup=10, horizon=10),
    dict(N=2, alpha=2, regime="cubic"),
    dict(N=2, alpha=2, bogus=1),
    dict(N=2.5, alpha=2),
    dict(alpha=2),
])
def test_invalid_parameters(bad):
    with pytest.raises(InvalidParameter):
        build_config(bad)


def test_infeasible_scaling():
    with pytest.raises(InfeasibleScaling):
        build_config(dict(N=1, epsilon_override=2.0, mu_total=1))


def test_infeasible_variance_rejected():
    # mean ~1 on {0,1,2} cannot carry variance 2
    with pytest.raises(InfeasibleMoments):
        build_config(dict(N=4, alpha=3, sigma_a2=2.0))


def test_error_names_field():
    with pytest.raises(InvalidParameter, match="alpha"):
        build_config(dict(N=4, alpha=0.5))


@pytest.mark.parametrize("N", [2, 3, 7, 10, 64, 1000])
@pytest.mark.parametrize("alpha", [1.01, 2.0, 3.5, 5.0, 7.3])
def test_epsilon_scaling_identity(N, alpha):
    cfg = build_config(dict(N=N, alpha=alpha, mu_total=N, warmup=0, horizon=1))
    assert cfg.epsilon * N ** (alpha - 1) == pytest.approx(1.0, abs=1e-12)


def test_amax_defaults_to_twice_n():
    cfg = build_config(dict(N=6, alpha=3))
    assert cfg.A_max == 12
    assert cfg.S_max == 2
    with pytest.raises(InvalidParameter, match="A_max"):
        build_config(dict(N=6, alpha=3, A_max=5))


def test_warmup_and_thin_defaults():
    cfg = build_config(dict(N=4, alpha=4))
    relax = cfg.increment_variance / cfg.epsilon**2
    assert cfg.warmup == max(10**6, math.ceil(20 * relax))
    assert cfg.thin == math.ceil(relax / 100)
    assert cfg.horizon == cfg.warmup + 10**6


def test_derive_recomputes_epsilon():
    cfg = build_config(dict(N=2, alpha=4))
    other = cfg.derive(N=4)
    assert other.epsilon == pytest.approx(4.0**-3)
    assert other.A_max == 8


def test_heterogeneous_rates():
    cfg = build_config(dict(N=3, alpha=2, mu_list=[0.5, 1.0, 1.5], sigma_a2=0.4, nu_s2=0.3))
    assert cfg.mu_total == pytest.approx(3.0)
    with pytest.raises(InvalidParameter, match="mu_list"):
        build_config(dict(N=3, alpha=2, mu_list=[1.0, 1.0]))


def test_predict_limit_linear():
    cfg = build_config(dict(N=4, alpha=5, sigma_a2=0.5, nu_s2=0.5, warmup=0, horizon=1))
    pred = predict_limit(cfg, r=2)
    assert pred.scale_exponent == 5
    assert pred.exp_mean == 0.5
    assert pred.rate_exponent_bound == pytest.approx(1.0)
    assert pred.scale_factor == pytest.approx(4.0**-5)
    assert pred.theta == pytest.approx(4 * 4.0**-10)
    assert pred.sigma2 / (2 * pred.theta) == pytest.approx(pred.exp_mean)


def test_predict_limit_quadratic():
    # variance 1 at mean just below 1 has no pmf on {0,1,2}; the prediction only reads the fields
    cfg = build_config(dict(N=4, alpha=4, regime="quadratic", warmup=0, horizon=1))
    cfg = dataclasses.replace(cfg, sigma_a2=1.0, nu_s2=1.0)
    pred = predict_limit(cfg, r=2)
    assert pred.scale_exponent == 5
    assert pred.exp_mean == 1.0
    assert pred.rate_exponent_bound == pytest.approx(0.5)
    assert pred.scale_factor == pytest.approx(4.0**-5)


def test_predict_limit_degenerate():
    cfg = build_config(dict(N=2, alpha=2, warmup=0, horizon=1))
    cfg = dataclasses.replace(cfg, sigma_a2=0.0, nu_s2=0.0)
    with pytest.raises(DegenerateLimit):
        predict_limit(cfg)


def test_predict_limit_rejects_small_r():
    cfg = build_config(dict(N=2, alpha=2, warmup=0, horizon=1))
    with pytest.raises(InvalidParameter):
        predict_limit(cfg, r=1)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0, 4.5, 6.0])
def test_regime_flag_shifts_exponent_by_one(alpha):
    base = dict(N=4, alpha=alpha, sigma_a2=0.5, nu_s2=0.5, warmup=0, horizon=1)
    lin = predict_limit(build_config(base))
    quad = predict_limit(build_config({**base, "regime": "quadratic"}))
    assert quad.scale_exponent - lin.scale_exponent == 1


def test_rate_bound_monotone_on_grid():
    alphas = np.linspace(1.1, 8.0, 25)
    rs = [2, 3, 4, 8, 16]
    table = np.empty((alphas.size, len(rs)))
    for i, a in enumerate(alphas):
        for j, r in enumerate(rs):
            cfg = build_config(dict(N=2, alpha=float(a), warmup=0, horizon=1))
            table[i, j] = predict_limit(cfg, r).rate_exponent_bound
    assert np.all(np.diff(table, axis=0) < 0)  # decreasing in alpha
    assert np.all(np.diff(table, axis=1) < 0)  # increasing in 1/r == decreasing in r


def test_regime_parse_aliases():
    assert Regime.parse("LinearVariance") is Regime.LINEAR
    assert Regime.parse("QuadraticVariance") is Regime.QUADRATIC
