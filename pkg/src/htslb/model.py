"""System parameterization and the predicted exponential limits."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .errors import DegenerateLimit, InfeasibleScaling, InvalidParameter
from . import processes

DEFAULT_MIN_WARMUP = 10**6
DEFAULT_POST_WARMUP = 10**6
DEFAULT_CEILING = 10**9


class Regime(enum.Enum):
    LINEAR = "linear"        # Var(A_total), Var(S_total) grow like N
    QUADRATIC = "quadratic"  # ... like N**2

    @property
    def quadratic(self) -> bool:
        return self is Regime.QUADRATIC

    @property
    def power(self) -> int:
        """Power of N dividing the slack to get the queue scaling."""
        return 2 if self is Regime.QUADRATIC else 1

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, Regime):
            return value
        key = str(value).strip().lower()
        aliases = {
            "linear": cls.LINEAR, "linearvariance": cls.LINEAR, "linear_variance": cls.LINEAR,
            "quadratic": cls.QUADRATIC, "quadraticvariance": cls.QUADRATIC,
            "quadratic_variance": cls.QUADRATIC,
        }
        if key not in aliases:
            raise InvalidParameter(f"regime: unknown value {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class SystemConfig:
    N: int
    alpha: Optional[float]
    epsilon: float
    epsilon_override: Optional[float]
    mu_total: float
    A_max: int
    S_max: int
    regime: Regime
    sigma_a2: float
    nu_s2: float
    gamma: float
    delta: float
    seed: int
    horizon: int
    warmup: int
    thin: int
    ceiling: int = DEFAULT_CEILING
    mu_list: Optional[tuple] = None
    arrival_pmf: Optional[tuple] = None
    service_pmf: Optional[tuple] = None
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def lambda_total(self) -> float:
        return self.mu_total - self.epsilon

    @property
    def scale_factor(self) -> float:
        """Multiplier turning the total queue into the quantity with an exponential limit."""
        return self.epsilon / self.N ** self.regime.power

    @property
    def increment_variance(self) -> float:
        """Var(A_total) + Var(S_total) per slot."""
        return (processes.build_arrival_process(self, require_idle_mass=False).total_variance
                + processes.build_service_process(self).total_variance)

    def derive(self, **changes) -> "SystemConfig":
        """Rebuild from the original parameters with some of them replaced.

        Derived fields (epsilon, warmup, thin, A_max) that were defaulted are
        recomputed for the new values.
        """
        raw = dict(self.raw)
        raw.update(changes)
        return build_config(raw)

    def as_dict(self) -> dict:
        return {
            "N": self.N, "alpha": self.alpha, "epsilon": self.epsilon,
            "epsilon_override": self.epsilon_override, "mu_total": self.mu_total,
            "lambda_total": self.lambda_total, "A_max": self.A_max, "S_max": self.S_max,
            "regime": self.regime.value, "sigma_a2": self.sigma_a2, "nu_s2": self.nu_s2,
            "gamma": self.gamma, "delta": self.delta, "seed": self.seed,
            "horizon": self.horizon, "warmup": self.warmup, "thin": self.thin,
            "ceiling": self.ceiling,
            "mu_list": list(self.mu_list) if self.mu_list is not None else None,
        }


@dataclass(frozen=True)
class LimitPrediction:
    scale_exponent: float       # beta in N**-beta * sum(Q); nan in override mode
    exp_mean: float
    rate_exponent_bound: float  # exponent of the distance bound O(N**x); nan in override mode
    theta: float
    sigma2: float
    scale_factor: float


_KNOWN_KEYS = {
    "N", "alpha", "epsilon_override", "mu_total", "mu_list", "A_max", "S_max", "regime",
    "sigma_a2", "nu_s2", "gamma", "delta", "seed", "horizon", "warmup", "post_warmup",
    "thin", "ceiling", "arrival_pmf", "service_pmf", "amax_ratio_min", "amax_ratio_max",
}


def _num(raw, key, default=None, cast=float):
    value = raw.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool):
        raise InvalidParameter(f"{key}: expected a number, got {value!r}")
    try:
        out = cast(value)
    except (TypeError, ValueError):
        raise InvalidParameter(f"{key}: expected a number, got {value!r}") from None
    if cast is int and float(value) != out:
        raise InvalidParameter(f"{key}: expected an integer, got {value!r}")
    if cast is float and not math.isfinite(out):
        raise InvalidParameter(f"{key}: must be finite, got {value!r}")
    return out


def _pmf_pair(raw, key):
    value = raw.get(key)
    if value is None:
        return None
    if isinstance(value, Mapping):
        support, pmf = value.get("support"), value.get("pmf")
    else:
        try:
            support, pmf = value
        except (TypeError, ValueError):
            raise InvalidParameter(f"{key}: expected (support, pmf) pair") from None
    if support is None or pmf is None:
        raise InvalidParameter(f"{key}: needs both support and pmf")
    try:
        spec = processes.ProcessSpec(tuple(support), tuple(pmf))
    except processes.InvalidSpec as exc:
        raise InvalidParameter(f"{key}: {exc}") from None
    return spec.support, spec.pmf


def build_config(raw_params: Mapping[str, Any]) -> SystemConfig:
    """Validate a flat parameter map and fill in derived fields."""
    raw = dict(raw_params)
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise InvalidParameter(f"unknown parameter(s): {', '.join(sorted(unknown))}")

    if "N" not in raw:
        raise InvalidParameter("N: required")
    N = _num(raw, "N", cast=int)
    if N < 1:
        raise InvalidParameter(f"N: must be >= 1, got {N}")

    override = _num(raw, "epsilon_override")
    alpha = _num(raw, "alpha")
    if override is None:
        if alpha is None:
            raise InvalidParameter("alpha: required unless epsilon_override is set")
        if alpha <= 1:
            raise InvalidParameter(f"alpha: must be > 1, got {alpha}")
        epsilon = math.exp((1.0 - alpha) * math.log(N))
    else:
        if override <= 0:
            raise InvalidParameter(f"epsilon_override: must be > 0, got {override}")
        if alpha is not None and alpha <= 1:
            raise InvalidParameter(f"alpha: must be > 1, got {alpha}")
        epsilon = override

    mu_list = raw.get("mu_list")
    if mu_list is not None:
        try:
            mu_list = tuple(float(m) for m in mu_list)
        except (TypeError, ValueError):
            raise InvalidParameter("mu_list: expected a list of numbers") from None
        if len(mu_list) != N:
            raise InvalidParameter(f"mu_list: expected {N} rates, got {len(mu_list)}")
        if any(m <= 0 or not math.isfinite(m) for m in mu_list):
            raise InvalidParameter("mu_list: rates must be positive")
    mu_total = _num(raw, "mu_total", math.fsum(mu_list) if mu_list else float(N))
    if mu_total <= 0:
        raise InvalidParameter(f"mu_total: must be > 0, got {mu_total}")
    if mu_list is not None and abs(math.fsum(mu_list) - mu_total) > 1e-9 * max(1.0, mu_total):
        raise InvalidParameter("mu_list: rates must sum to mu_total")
    if mu_total - epsilon <= 0:
        raise InfeasibleScaling(
            f"epsilon={epsilon} >= mu_total={mu_total}: arrival rate would be nonpositive"
        )

    regime = Regime.parse(raw.get("regime", "linear"))
    sigma_a2 = _num(raw, "sigma_a2", 0.5)
    nu_s2 = _num(raw, "nu_s2", 0.5)
    for key, val in (("sigma_a2", sigma_a2), ("nu_s2", nu_s2)):
        if val < 0:
            raise InvalidParameter(f"{key}: must be >= 0, got {val}")
    gamma = _num(raw, "gamma", 1.0)
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParameter(f"gamma: must lie in [0, 1], got {gamma}")
    delta = _num(raw, "delta", 0.01)
    if delta <= 0:
        raise InvalidParameter(f"delta: must be > 0, got {delta}")
    seed = _num(raw, "seed", 0, cast=int)
    if not 0 <= seed < 2**64:
        raise InvalidParameter(f"seed: must be a 64-bit unsigned integer, got {seed}")
    ceiling = _num(raw, "ceiling", DEFAULT_CEILING, cast=int)
    if ceiling < 1:
        raise InvalidParameter(f"ceiling: must be >= 1, got {ceiling}")
    arrival_pmf = _pmf_pair(raw, "arrival_pmf")
    service_pmf = _pmf_pair(raw, "service_pmf")

    draft = SystemConfig(
        N=N, alpha=alpha, epsilon=epsilon, epsilon_override=override, mu_total=mu_total,
        A_max=0, S_max=0, regime=regime, sigma_a2=sigma_a2, nu_s2=nu_s2, gamma=gamma,
        delta=delta, seed=seed, horizon=1, warmup=0, thin=1, ceiling=ceiling,
        mu_list=mu_list, arrival_pmf=arrival_pmf, service_pmf=service_pmf,
    )
    arrivals = processes.build_arrival_process(draft)
    services = processes.build_service_process(draft)
    # explicit pmfs define the variance coefficients
    sigma_a2 = arrivals.component.variance
    if service_pmf is not None:
        nu_s2 = services.specs[0].variance

    A_max = _num(raw, "A_max", arrivals.max_total, cast=int)
    S_max = _num(raw, "S_max", services.max_per_server, cast=int)
    if A_max < arrivals.max_total:
        raise InvalidParameter(f"A_max: arrival support reaches {arrivals.max_total} > {A_max}")
    if S_max < services.max_per_server:
        raise InvalidParameter(f"S_max: service support reaches {services.max_per_server} > {S_max}")
    if A_max < math.ceil(mu_total - epsilon):
        raise InvalidParameter(f"A_max: {A_max} below ceil(lambda_total)")
    lo = _num(raw, "amax_ratio_min", 0.5)
    hi = _num(raw, "amax_ratio_max", 16.0)
    if not lo <= A_max / N <= hi:
        raise InvalidParameter(f"A_max: A_max/N = {A_max / N} outside [{lo}, {hi}]")

    inc_var = arrivals.total_variance + services.total_variance
    relax = inc_var / epsilon**2
    warmup = _num(raw, "warmup", max(DEFAULT_MIN_WARMUP, math.ceil(20 * relax)), cast=int)
    if warmup < 0:
        raise InvalidParameter(f"warmup: must be >= 0, got {warmup}")
    if "horizon" in raw:
        horizon = _num(raw, "horizon", cast=int)
    else:
        post = _num(raw, "post_warmup", DEFAULT_POST_WARMUP, cast=int)
        if post < 1:
            raise InvalidParameter(f"post_warmup: must be >= 1, got {post}")
        horizon = warmup + post
    if horizon < 1:
        raise InvalidParameter(f"horizon: must be >= 1, got {horizon}")
    if warmup >= horizon:
        raise InvalidParameter(f"warmup: must be < horizon ({warmup} >= {horizon})")
    thin = _num(raw, "thin", max(1, math.ceil(relax / 100)), cast=int)
    if thin < 1:
        raise InvalidParameter(f"thin: must be >= 1, got {thin}")

    return SystemConfig(
        N=N, alpha=alpha, epsilon=epsilon, epsilon_override=override, mu_total=mu_total,
        A_max=A_max, S_max=S_max, regime=regime, sigma_a2=sigma_a2, nu_s2=nu_s2,
        gamma=gamma, delta=delta, seed=seed, horizon=horizon, warmup=warmup, thin=thin,
        ceiling=ceiling, mu_list=mu_list, arrival_pmf=arrival_pmf, service_pmf=service_pmf,
        raw=raw,
    )


def predict_limit(config: SystemConfig, r: int = 2) -> LimitPrediction:
    if isinstance(r, bool) or int(r) != r or r < 2:
        raise InvalidParameter(f"r: must be an integer >= 2, got {r}")
    exp_mean = (config.sigma_a2 + config.nu_s2) / 2.0
    if exp_mean <= 0:
        raise DegenerateLimit("sigma_a2 + nu_s2 = 0: the limit is a point mass at zero")
    power = config.regime.power
    if config.alpha is not None and config.epsilon_override is None:
        beta = config.alpha + (power - 1)
        rate = (4.0 if power == 1 else 3.0) - config.alpha + (config.alpha - 1.0) / r
    else:
        beta = math.nan
        rate = math.nan
    eps_hat = config.scale_factor
    theta = config.N**power * eps_hat**2
    return LimitPrediction(
        scale_exponent=beta,
        exp_mean=exp_mean,
        rate_exponent_bound=rate,
        theta=theta,
        sigma2=theta * (config.sigma_a2 + config.nu_s2),
        scale_factor=eps_hat,
    )
