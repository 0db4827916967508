"""Turning steady-state samples into verdicts.

Distances to the predicted exponential are computed exactly from the
sorted sample against the analytic CDF, so no second Monte Carlo layer is
involved. Standard errors come from replications when there are at least
two, and from batch means otherwise.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import geometry, kernels
from .engine import SteadyStateSample, batch_means, replicate
from .errors import DegenerateLimit, DuplicateN, EmptySample, InvalidParameter
from .model import SystemConfig, predict_limit
from .processes import build_arrival_process, build_service_process

IDENTITY_SIGMAS = 4.0
HALF_SIGMAS = 2.0


@dataclass(frozen=True)
class DistanceReport:
    w1: float
    ks: float
    sample_mean: float
    sample_size: int
    se_mean: float


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    estimate: float
    target: float
    gap: float
    se: float
    passed: bool
    second_half: float
    warmup_flag: bool


@dataclass(frozen=True)
class IdentityReport:
    unused_service: IdentityCheck
    arrival_rate: IdentityCheck
    se_method: str
    diagnosis: str

    @property
    def passed(self) -> bool:
        return self.unused_service.passed and self.arrival_rate.passed

    def as_dict(self) -> dict:
        return {
            "unused_service": asdict(self.unused_service),
            "arrival_rate": asdict(self.arrival_rate),
            "se_method": self.se_method,
            "diagnosis": self.diagnosis,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ErrorTermReport:
    u_l1_mean: float
    u_l1_sq_mean: float
    cross_mean: float
    g_estimate: float
    third_moment_a: float
    third_moment_s: float
    epsilon: float
    t1_surrogate: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepRow:
    N: int
    alpha: float
    regime: str
    w1: float
    w1_se: float
    ks: float
    sample_mean: float
    mean_se: float
    exp_mean: float
    g_estimate: float
    ssc_moment: float
    identity_gap: float
    identity_se: float
    identity_pass: bool
    sample_size: int
    replications: int


ROW_COLUMNS = tuple(SweepRow.__dataclass_fields__)


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    fitted_decay: Optional[float]
    fitted_decay_se: Optional[float]
    predicted_decay: float
    w1_nonincreasing: bool
    mean_gap_nonincreasing: bool

    def as_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "fitted_decay": self.fitted_decay,
            "fitted_decay_se": self.fitted_decay_se,
            "predicted_decay": self.predicted_decay,
            "w1_nonincreasing": self.w1_nonincreasing,
            "mean_gap_nonincreasing": self.mean_gap_nonincreasing,
        }


def _segment_gap(c, a, b, m):
    """Integral of (c - F(x)) over [a, b] for F the Exp(mean m) CDF."""
    return (c - 1.0) * (b - a) + m * (np.exp(-a / m) - np.exp(-b / m))


def wasserstein_to_exponential(samples, exp_mean: float) -> float:
    """W1 between the empirical law of ``samples`` and Exp(mean ``exp_mean``).

    Integrates |F_n - F| exactly: on each gap between order statistics F_n
    is constant, and the integrand changes sign at most once where F
    crosses that level.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    m = float(exp_mean)
    head = x[0] - m * (1.0 - math.exp(-x[0] / m))
    tail = m * math.exp(-x[-1] / m)
    if n == 1:
        return float(head + tail)
    a, b = x[:-1], x[1:]
    c = np.arange(1, n) / n
    cross = np.clip(-m * np.log1p(-c), a, b)
    body = np.abs(_segment_gap(c, a, cross, m)) + np.abs(_segment_gap(c, cross, b, m))
    return float(head + math.fsum(body) + tail)


def ks_to_exponential(samples, exp_mean: float) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = -np.expm1(-x / exp_mean)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def _check_samples(samples, exp_mean):
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise EmptySample("no samples")
    if not exp_mean > 0:
        raise DegenerateLimit(f"exponential mean must be positive, got {exp_mean}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise InvalidParameter("samples must be finite and nonnegative")
    return x


def _se(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return math.nan
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


def empirical_wasserstein(samples, exp_mean: float) -> DistanceReport:
    """Exact W1 and KS distance from ``samples`` to the exponential with mean ``exp_mean``.

    ``se_mean`` uses 32 batch means of the sample taken in order, which
    absorbs the autocorrelation of a simulated sequence.
    """
    x = _check_samples(samples, exp_mean)
    return DistanceReport(
        w1=wasserstein_to_exponential(x, exp_mean),
        ks=ks_to_exponential(x, exp_mean),
        sample_mean=float(x.mean()),
        sample_size=int(x.size),
        se_mean=_se(batch_means(x)),
    )


def _identity(name, per_rep_full, per_rep_half, batch_vals, target):
    per_rep_full = np.asarray(per_rep_full, dtype=float)
    if per_rep_full.size >= 2:
        se = _se(per_rep_full)
        se_half = _se(per_rep_half)
    else:
        se = _se(batch_vals)
        se_half = se * math.sqrt(2.0) if math.isfinite(se) else math.nan
    est = float(per_rep_full.mean())
    half = float(np.mean(per_rep_half))
    gap = abs(est - target)
    passed = gap <= IDENTITY_SIGMAS * se if math.isfinite(se) else gap == 0.0
    flag = math.isfinite(se) and abs(est - half) > HALF_SIGMAS * math.hypot(se, se_half)
    return IdentityCheck(name, est, target, gap, se, bool(passed), half, bool(flag))


def check_identities(sample: SteadyStateSample, config: SystemConfig) -> IdentityReport:
    """Stationarity checks: mean unused service equals epsilon, mean arrivals equal lambda.

    Both hold exactly in steady state, so a failure beyond 4 standard
    errors means either too short a warmup (the second-half estimate
    disagrees with the full window) or a defect in the dynamics.
    """
    reps = sample.replications
    if sample.records_summary.slots == 0:
        raise EmptySample("no post-warmup slots recorded")
    checks = []
    for name, col, target in (("unused_service", kernels.ACC_U, config.epsilon),
                              ("arrival_rate", kernels.ACC_ARRIVALS, config.lambda_total)):
        full = [r.sums.mean(col) for r in reps]
        half = [r.sums.mean(col, second_half=True) for r in reps]
        checks.append(_identity(name, full, half, sample.records_summary.batch_means(col), target))
    u, a = checks
    method = "replications" if len(reps) >= 2 else "batch_means"
    if u.passed and a.passed:
        diagnosis = "ok" if not (u.warmup_flag or a.warmup_flag) else "ok (warmup drift flagged)"
    elif u.warmup_flag or a.warmup_flag:
        diagnosis = "failed: insufficient warmup (first and second half disagree)"
    else:
        diagnosis = "failed: identity gap not explained by warmup"
    return IdentityReport(u, a, method, diagnosis)


def estimate_cross_term(sample: SteadyStateSample, config: SystemConfig) -> ErrorTermReport:
    """Empirical error-term ingredients.

    Unused-service moments and the cross term E[||Q(t+1)||_1 ||U||_1] come
    from the run; moments of the arrival and service totals come from the
    exact pmfs.
    """
    sums = sample.records_summary
    if sums.slots == 0:
        raise EmptySample("no post-warmup slots recorded")
    arrivals = build_arrival_process(config)
    services = build_service_process(config)
    power = config.regime.power
    norm = float(config.N) ** power
    u1 = sums.mean(kernels.ACC_U)
    u2 = sums.mean(kernels.ACC_U2)
    cross = sums.mean(kernels.ACC_CROSS)
    a3 = arrivals.total_moment(3)
    s3 = services.total_moment(3)
    eps_hat = config.scale_factor
    var_coef = config.sigma_a2 + config.nu_s2
    moments = a3 + s3 + 3.0 * config.mu_total * (arrivals.total_moment(2) + services.total_moment(2))
    t1 = (2.0 * eps_hat / (3.0 * norm * var_coef) * moments if var_coef > 0 else math.inf)
    t1 += u2 / (2.0 * norm) + eps_hat**2 / (2.0 * norm)
    return ErrorTermReport(
        u_l1_mean=u1,
        u_l1_sq_mean=u2,
        cross_mean=cross,
        g_estimate=cross / norm,
        third_moment_a=a3,
        third_moment_s=s3,
        epsilon=config.epsilon,
        t1_surrogate=t1,
    )


def _slope(N_values, w1_values):
    x = np.log(np.asarray(N_values, dtype=float))
    y = np.log(np.asarray(w1_values, dtype=float))
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.stderr)


def convergence_sweep(base_config: SystemConfig, policy, N_list: Sequence[int], r: int = 2,
                      R: int = 4, seed_list: Optional[Sequence[int]] = None, jobs: int = 1,
                      progress=None) -> ConvergenceReport:
    """Replicated runs at each N, each scored against its predicted limit.

    Warmup, thinning and epsilon are re-derived per N unless pinned in the
    base config. ``progress`` is called with each finished row.
    """
    N_list = [int(n) for n in N_list]
    if len(set(N_list)) != len(N_list):
        raise DuplicateN(f"N_list contains duplicates: {N_list}")
    if len(N_list) < 2:
        raise InvalidParameter("N_list needs at least two values")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise InvalidParameter(f"N_list must be strictly increasing: {N_list}")
    rows = []
    predicted = math.nan
    for N in N_list:
        cfg = base_config.derive(N=N)
        pred = predict_limit(cfg, r)
        predicted = pred.rate_exponent_bound
        sample = replicate(cfg, policy, R, seed_list, jobs=jobs)
        dist = empirical_wasserstein(sample.scaled_totals, pred.exp_mean)
        parts = sample.per_replication()
        w1_se = _se([wasserstein_to_exponential(p, pred.exp_mean) for p in parts])
        mean_se = _se([p.mean() for p in parts]) if len(parts) >= 2 else dist.se_mean
        err = estimate_cross_term(sample, cfg)
        ident = check_identities(sample, cfg)
        ssc = geometry.ssc_moments(sample.states, cfg.gamma, r).value if sample.states.size else math.nan
        row = SweepRow(
            N=N, alpha=cfg.alpha, regime=cfg.regime.value, w1=dist.w1, w1_se=w1_se, ks=dist.ks,
            sample_mean=dist.sample_mean, mean_se=mean_se, exp_mean=pred.exp_mean,
            g_estimate=err.g_estimate, ssc_moment=ssc,
            identity_gap=ident.unused_service.gap, identity_se=ident.unused_service.se,
            identity_pass=ident.passed, sample_size=dist.sample_size, replications=R,
        )
        rows.append(row)
        if progress is not None:
            progress(row)

    def within(prev, cur, key, se_key):
        se = math.hypot(getattr(prev, se_key), getattr(cur, se_key))
        se = se if math.isfinite(se) else 0.0
        return key(cur) <= key(prev) + 2.0 * se

    w1_ok = all(within(p, c, lambda z: z.w1, "w1_se") for p, c in zip(rows, rows[1:]))
    mean_ok = all(within(p, c, lambda z: abs(z.sample_mean - z.exp_mean), "mean_se")
                  for p, c in zip(rows, rows[1:]))
    slope = slope_se = None
    if len(rows) >= 3 and all(row.w1 > 0 for row in rows):
        slope, slope_se = _slope([row.N for row in rows], [row.w1 for row in rows])
    return ConvergenceReport(tuple(rows), slope, slope_se, predicted, w1_ok, mean_ok)
