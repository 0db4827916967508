"""Bounded-support integer distributions for arrivals and services.

Every distribution is an explicit pmf, so means, variances and higher
moments are exact. Sampling goes through the inverse CDF on uniforms drawn
by the caller, which keeps the JIT and pure-Python engine paths in lockstep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleMoments, InvalidParameter, InvalidSpec

PROB_TOL = 1e-12
MOMENT_TOL = 1e-10

SUM = "sum"        # total = sum of `multiplicity` i.i.d. component draws
SCALE = "scale"    # total = multiplicity * one component draw

INDEPENDENT = "independent"
COMMON = "common"  # one draw shared by every server


@dataclass(frozen=True)
class ProcessSpec:
    """A pmf on a finite set of nonnegative integers.

    ``mean`` and ``variance`` are filled from the pmf when omitted and
    checked against it when given.
    """

    support: tuple
    pmf: tuple
    mean: float = None
    variance: float = None

    def __post_init__(self):
        support = tuple(int(s) for s in self.support)
        pmf = tuple(float(p) for p in self.pmf)
        if len(support) == 0:
            raise InvalidSpec("empty support")
        if len(support) != len(pmf):
            raise InvalidSpec(f"support has {len(support)} points but pmf has {len(pmf)}")
        if any(s < 0 for s in support):
            raise InvalidSpec("support must be nonnegative")
        if any(b <= a for a, b in zip(support, support[1:])):
            raise InvalidSpec("support must be strictly increasing")
        if any(not math.isfinite(p) or p < 0 for p in pmf):
            raise InvalidSpec("probabilities must be finite and nonnegative")
        if abs(math.fsum(pmf) - 1.0) > PROB_TOL:
            raise InvalidSpec(f"probabilities sum to {math.fsum(pmf)!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "pmf", pmf)

        m = math.fsum(s * p for s, p in zip(support, pmf))
        v = math.fsum((s - m) ** 2 * p for s, p in zip(support, pmf))
        if self.mean is not None and abs(self.mean - m) > MOMENT_TOL:
            raise InvalidSpec(f"stated mean {self.mean} differs from pmf mean {m}")
        if self.variance is not None and abs(self.variance - v) > MOMENT_TOL:
            raise InvalidSpec(f"stated variance {self.variance} differs from pmf variance {v}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "variance", v)

    @property
    def max_value(self) -> int:
        return max(s for s, p in zip(self.support, self.pmf) if p > 0)

    def prob(self, value: int) -> float:
        try:
            return self.pmf[self.support.index(value)]
        except ValueError:
            return 0.0

    def raw_moment(self, k: int) -> float:
        return math.fsum(float(s) ** k * p for s, p in zip(self.support, self.pmf))

    def dense(self) -> np.ndarray:
        """pmf as an array indexed by value, from 0 to max(support)."""
        out = np.zeros(self.support[-1] + 1)
        out[list(self.support)] = self.pmf
        return out

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c


def solve_three_point(mean: float, variance: float, unit: int = 1) -> ProcessSpec:
    """Unique pmf on ``{0, unit, 2*unit}`` with the given mean and variance."""
    if unit < 1:
        raise InvalidParameter(f"unit must be a positive integer, got {unit}")
    if not (math.isfinite(mean) and math.isfinite(variance)) or variance < 0:
        raise InfeasibleMoments(f"mean={mean}, variance={variance} not admissible")
    m = mean / unit
    v = variance / unit**2
    p2 = (v + m * m - m) / 2.0
    p1 = m - 2.0 * p2
    p0 = 1.0 - p1 - p2
    probs = []
    for p in (p0, p1, p2):
        if p < -PROB_TOL or p > 1.0 + PROB_TOL:
            raise InfeasibleMoments(
                f"no pmf on {{0,{unit},{2 * unit}}} has mean {mean} and variance {variance}"
                f" (solved probabilities {p0:.6g}, {p1:.6g}, {p2:.6g})"
            )
        probs.append(min(max(p, 0.0), 1.0))
    total = math.fsum(probs)
    probs = [p / total for p in probs]
    return ProcessSpec((0, unit, 2 * unit), tuple(probs))


def convolve_power(spec: ProcessSpec, n: int) -> np.ndarray:
    """Dense pmf of the sum of ``n`` i.i.d. draws from ``spec``."""
    out = np.array([1.0])
    base = spec.dense()
    for _ in range(n):
        out = np.convolve(out, base)
    return out


def convolve_all(specs: Sequence[ProcessSpec]) -> np.ndarray:
    out = np.array([1.0])
    for s in specs:
        out = np.convolve(out, s.dense())
    return out


def _dense_moment(pmf: np.ndarray, k: int) -> float:
    values = np.arange(len(pmf), dtype=float)
    return float(np.sum(values**k * pmf))


@dataclass(frozen=True)
class ArrivalProcess:
    """Total arrivals per slot, built from one component pmf.

    ``mode == "sum"``: the total is ``multiplicity`` i.i.d. component draws
    summed. ``mode == "scale"``: the total is ``multiplicity`` times a single
    component draw.
    """

    component: ProcessSpec
    multiplicity: int
    mode: str

    @property
    def total_mean(self) -> float:
        return self.multiplicity * self.component.mean

    @property
    def total_variance(self) -> float:
        if self.mode == SUM:
            return self.multiplicity * self.component.variance
        return self.multiplicity**2 * self.component.variance

    @property
    def max_total(self) -> int:
        return self.multiplicity * self.component.max_value

    def total_pmf(self) -> np.ndarray:
        """Exact dense pmf of the total, indexed by value."""
        if self.mode == SUM:
            return convolve_power(self.component, self.multiplicity)
        out = np.zeros(self.multiplicity * self.component.support[-1] + 1)
        for s, p in zip(self.component.support, self.component.pmf):
            out[self.multiplicity * s] += p
        return out

    def total_moment(self, k: int) -> float:
        if self.mode == SCALE:
            return float(self.multiplicity) ** k * self.component.raw_moment(k)
        return _dense_moment(self.total_pmf(), k)


@dataclass(frozen=True)
class ServiceProcess:
    """Per-server service draws.

    With ``coupling == "independent"`` there is one spec per server. With
    ``coupling == "common"`` ``specs`` holds a single spec whose draw is
    applied to every server in the slot.
    """

    specs: tuple
    n_servers: int
    coupling: str

    def spec_for(self, n: int) -> ProcessSpec:
        return self.specs[0] if self.coupling == COMMON else self.specs[n]

    @property
    def total_mean(self) -> float:
        if self.coupling == COMMON:
            return self.n_servers * self.specs[0].mean
        return math.fsum(s.mean for s in self.specs)

    @property
    def total_variance(self) -> float:
        if self.coupling == COMMON:
            return self.n_servers**2 * self.specs[0].variance
        return math.fsum(s.variance for s in self.specs)

    @property
    def max_per_server(self) -> int:
        return max(s.max_value for s in self.specs)

    def total_pmf(self) -> np.ndarray:
        if self.coupling == COMMON:
            v = self.specs[0]
            out = np.zeros(self.n_servers * v.support[-1] + 1)
            for s, p in zip(v.support, v.pmf):
                out[self.n_servers * s] += p
            return out
        return convolve_all(self.specs)

    def total_moment(self, k: int) -> float:
        if self.coupling == COMMON:
            return float(self.n_servers) ** k * self.specs[0].raw_moment(k)
        return _dense_moment(self.total_pmf(), k)


def build_arrival_process(config, require_idle_mass: bool = True) -> ArrivalProcess:
    """Arrival law matching the config's variance regime.

    Linear regime: N i.i.d. components with mean lambda/N and variance
    ``sigma_a2``, summed. Quadratic regime: N times one draw with mean
    lambda/N and variance ``sigma_a2``. An explicit component pmf in the
    config replaces the three-point solve.

    ``require_idle_mass`` enforces P(total = 0) > 0.
    """
    n = config.N
    target_mean = config.lambda_total / n
    if config.arrival_pmf is not None:
        component = ProcessSpec(*config.arrival_pmf)
        if abs(component.mean - target_mean) > MOMENT_TOL:
            raise InfeasibleMoments(
                f"arrival pmf mean {component.mean} != lambda_total/N = {target_mean}"
            )
    else:
        component = solve_three_point(target_mean, config.sigma_a2)
    proc = ArrivalProcess(component, n, SCALE if config.regime.quadratic else SUM)
    if require_idle_mass and component.prob(0) <= 0.0:
        raise InfeasibleMoments(
            "arrival component puts no mass at zero; P(A_total = 0) must be positive"
        )
    return proc


def build_service_process(config) -> ServiceProcess:
    """Service law matching the config's variance regime.

    Linear regime: independent per-server draws with mean mu_n and variance
    ``nu_s2``. Quadratic regime: a single draw with mean mu_total/N and
    variance ``nu_s2`` shared by all servers, which is what makes
    Var(S_total) grow like N**2 under a constant per-server bound.
    """
    n = config.N
    if config.regime.quadratic:
        if config.mu_list is not None and len(set(config.mu_list)) > 1:
            raise InvalidParameter("heterogeneous rates are not supported in the quadratic regime")
        if config.service_pmf is not None:
            spec = ProcessSpec(*config.service_pmf)
        else:
            spec = solve_three_point(config.mu_total / n, config.nu_s2)
        return ServiceProcess((spec,), n, COMMON)
    rates = config.mu_list if config.mu_list is not None else (config.mu_total / n,) * n
    if config.service_pmf is not None:
        spec = ProcessSpec(*config.service_pmf)
        specs = (spec,) * n
    else:
        cache = {}
        specs = []
        for mu in rates:
            if mu not in cache:
                cache[mu] = solve_three_point(mu, config.nu_s2)
            specs.append(cache[mu])
        specs = tuple(specs)
    for mu, s in zip(rates, specs):
        if abs(s.mean - mu) > MOMENT_TOL:
            raise InfeasibleMoments(f"service pmf mean {s.mean} != server rate {mu}")
    return ServiceProcess(specs, n, INDEPENDENT)


def draw_values(spec: ProcessSpec, u):
    """Map uniforms in [0, 1) to values of ``spec`` by inverse CDF."""
    support = np.asarray(spec.support, dtype=np.int64)
    idx = np.searchsorted(spec.cdf(), u, side="right")
    return support[idx]


def sample(spec: ProcessSpec, rng: np.random.Generator) -> int:
    if not isinstance(spec, ProcessSpec) or len(spec.support) == 0:
        raise InvalidSpec("cannot sample from an empty spec")
    return int(draw_values(spec, rng.random()))
