"""Dispatch policies as distributions over sorted queue positions.

Position 0 is the shortest queue. Every built-in policy here is state
independent in position space; custom policies may be a fixed table or a
callable ``f(q) -> probs`` evaluated on the current queue vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidPolicyParams
from . import geometry
from .kernels import pick_server

DIST_TOL = 1e-12
SIGN_TOL = 1e-12

JSQ = "jsq"
RANDOM = "random"
POWER_OF_D = "power_of_d"
P_JSQ = "p_jsq"
CUSTOM = "custom"
KINDS = (JSQ, RANDOM, POWER_OF_D, P_JSQ, CUSTOM)

_ALIASES = {
    "jsq": JSQ, "join_shortest_queue": JSQ,
    "random": RANDOM, "rand": RANDOM,
    "power_of_d": POWER_OF_D, "pod": POWER_OF_D, "power-of-d": POWER_OF_D,
    "p_jsq": P_JSQ, "p-jsq": P_JSQ, "pjsq": P_JSQ,
    "custom": CUSTOM,
}


@dataclass(frozen=True)
class Policy:
    kind: str
    d: Optional[int] = None
    p: Optional[float] = None
    table: Optional[tuple] = None
    fn: Optional[Callable] = field(default=None, compare=False)

    @property
    def name(self) -> str:
        if self.kind == POWER_OF_D:
            return f"power_of_d(d={self.d})"
        if self.kind == P_JSQ:
            return f"p_jsq(p={self.p})"
        return self.kind

    @property
    def state_dependent(self) -> bool:
        return self.fn is not None


def make_policy(name: str, d=None, p=None, table=None, fn=None) -> Policy:
    kind = _ALIASES.get(str(name).strip().lower().replace(" ", "_"))
    if kind is None:
        raise InvalidPolicyParams(f"unknown policy {name!r}; expected one of {', '.join(KINDS)}")
    if kind == POWER_OF_D:
        if d is None or isinstance(d, bool) or int(d) != d or d < 1:
            raise InvalidPolicyParams(f"power_of_d needs an integer d >= 1, got {d!r}")
        d = int(d)
    if kind == P_JSQ:
        if p is None or not 0.0 <= float(p) <= 1.0:
            raise InvalidPolicyParams(f"p_jsq needs p in [0, 1], got {p!r}")
        p = float(p)
    if kind == CUSTOM:
        if (table is None) == (fn is None):
            raise InvalidPolicyParams("custom policy needs exactly one of table or fn")
        if table is not None:
            table = tuple(float(v) for v in table)
            _check_distribution(np.asarray(table))
    return Policy(kind, d=d, p=p, table=table, fn=fn)


def policy_from_mapping(spec) -> Policy:
    spec = dict(spec)
    name = spec.pop("name", None)
    if name is None:
        raise InvalidPolicyParams("policy: 'name' is required")
    extra = set(spec) - {"d", "p", "table"}
    if extra:
        raise InvalidPolicyParams(f"policy: unknown key(s) {', '.join(sorted(extra))}")
    return make_policy(name, **spec)


@dataclass(frozen=True)
class DispatchDistribution:
    probs: np.ndarray


@dataclass(frozen=True)
class PreferenceVector:
    delta: np.ndarray


@dataclass(frozen=True)
class Pi1Certificate:
    satisfied: bool
    k: Optional[int]
    margin: float
    states_checked: int
    failing_state: Optional[list] = None

    def as_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "k": self.k,
            "margin": self.margin,
            "states_checked": self.states_checked,
            "failing_state": self.failing_state,
        }


def _check_distribution(probs: np.ndarray) -> None:
    if probs.ndim != 1 or probs.size == 0:
        raise InvalidPolicyParams("dispatch table must be a nonempty vector")
    if np.any(~np.isfinite(probs)) or np.any(probs < 0):
        raise InvalidPolicyParams("dispatch table entries must be finite and nonnegative")
    if abs(math.fsum(probs) - 1.0) > DIST_TOL:
        raise InvalidPolicyParams(f"dispatch table sums to {math.fsum(probs)!r}, not 1")


def _queue_vector(state) -> np.ndarray:
    q = getattr(state, "q", state)
    return np.asarray(q, dtype=np.int64)


def power_of_d_probs(N: int, d: int) -> np.ndarray:
    """P(the n-th shortest of N queues wins) when d are sampled without replacement.

    The n-th shortest wins iff it is sampled and the other d-1 come from the
    N-n longer queues: C(N-n, d-1) / C(N, d), computed in exact integers.
    """
    if not 1 <= d <= N:
        raise InvalidPolicyParams(f"power_of_d needs 1 <= d <= N, got d={d}, N={N}")
    total = math.comb(N, d)
    return np.array([float(Fraction(math.comb(N - n, d - 1), total)) for n in range(1, N + 1)])


def server_weights(N: int, mu_list: Optional[Sequence[float]] = None) -> np.ndarray:
    if mu_list is None:
        return np.full(N, 1.0 / N)
    w = np.asarray(mu_list, dtype=float)
    return w / w.sum()


def random_positions(q, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Weighted random routing mapped to sorted positions.

    Tied queues share their block of positions evenly, which is the
    expectation under uniform tie-breaking.
    """
    q = np.asarray(q)
    N = q.size
    if weights is None or np.allclose(weights, weights[0], rtol=0, atol=1e-15):
        return np.full(N, 1.0 / N)
    order = np.argsort(q, kind="stable")
    sq = q[order]
    w = weights[order]
    out = np.empty(N)
    i = 0
    while i < N:
        j = i
        while j + 1 < N and sq[j + 1] == sq[i]:
            j += 1
        out[i:j + 1] = w[i:j + 1].mean()
        i = j + 1
    return out


def position_probabilities(policy: Policy, state, weights=None) -> DispatchDistribution:
    """Probability that the batch goes to the n-th shortest queue.

    ``weights`` are per-server rate shares used by random routing; uniform
    when omitted.
    """
    q = _queue_vector(state)
    N = q.size
    if N < 1:
        raise InvalidPolicyParams("state must have at least one queue")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
    if policy.kind == JSQ:
        probs = np.zeros(N)
        probs[0] = 1.0
    elif policy.kind == RANDOM:
        probs = random_positions(q, weights)
    elif policy.kind == POWER_OF_D:
        probs = power_of_d_probs(N, policy.d)
    elif policy.kind == P_JSQ:
        probs = (1.0 - policy.p) * random_positions(q, weights)
        probs[0] += policy.p
    elif policy.fn is not None:
        probs = np.asarray(policy.fn(q.copy()), dtype=float)
    else:
        probs = np.asarray(policy.table, dtype=float)
    if probs.shape != (N,):
        raise InvalidPolicyParams(f"dispatch table has length {probs.size}, expected {N}")
    _check_distribution(probs)
    return DispatchDistribution(probs)


def dispatching_preference(p: DispatchDistribution, config=None, state=None) -> PreferenceVector:
    """Deviation of ``p`` from (weighted) random routing."""
    probs = np.asarray(p.probs, dtype=float)
    N = probs.size
    mu_list = getattr(config, "mu_list", None)
    if mu_list is None or state is None:
        rand = np.full(N, 1.0 / N)
    else:
        rand = random_positions(_queue_vector(state), server_weights(N, mu_list))
    return PreferenceVector(probs - rand)


def sign_change_index(delta: np.ndarray, tol: float = SIGN_TOL) -> Optional[int]:
    """Largest k in 2..N (1-based) with delta >= 0 before k and <= 0 from k on."""
    N = delta.size
    best = None
    for k in range(2, N + 1):
        if np.all(delta[: k - 1] >= -tol) and np.all(delta[k - 1:] <= tol):
            best = k
    return best


@dataclass
class StateSampler:
    """Random queue vectors for certifying state-dependent policies.

    States inside the cone are skipped by the certifier; ``n_states`` counts
    draws, not accepted states.
    """

    n_states: int = 1000
    max_queue: int = 50
    seed: int = 0

    def states(self, N: int):
        rng = np.random.default_rng(self.seed)
        for _ in range(self.n_states):
            yield rng.integers(0, self.max_queue + 1, size=N)


def certify_pi1(policy: Policy, config, state_sampler: Optional[StateSampler] = None) -> Pi1Certificate:
    """Check the single-sign-change and margin conditions of class Pi_1.

    Built-in policies on homogeneous servers have a state-independent
    preference vector, so one evaluation settles them. Otherwise the
    conditions are checked on every sampled state outside K_gamma.
    """
    N = config.N
    heterogeneous = config.mu_list is not None and len(set(config.mu_list)) > 1
    weights = server_weights(N, config.mu_list)

    def evaluate(q):
        dist = position_probabilities(policy, q, weights)
        delta = dispatching_preference(dist, config, q).delta
        return sign_change_index(delta), float(min(abs(delta[0]), abs(delta[-1])))

    if not policy.state_dependent and not heterogeneous:
        q = np.arange(N, dtype=np.int64)
        k, margin = evaluate(q)
        ok = k is not None and margin >= config.delta - SIGN_TOL
        return Pi1Certificate(ok, k, margin, 1, None if ok else q.tolist())

    sampler = state_sampler or StateSampler(seed=config.seed)
    checked = 0
    ks = set()
    worst = math.inf
    for q in sampler.states(N):
        if geometry.in_cone(q, config.gamma):
            continue
        checked += 1
        k, margin = evaluate(q)
        worst = min(worst, margin)
        if k is None or margin < config.delta - SIGN_TOL:
            return Pi1Certificate(False, k, margin, checked, q.tolist())
        ks.add(k)
    if checked == 0:
        return Pi1Certificate(False, None, math.nan, 0, None)
    return Pi1Certificate(True, ks.pop() if len(ks) == 1 else None, worst, checked, None)


@dataclass(frozen=True)
class KernelPolicy:
    """Array form consumed by the simulation kernels.

    With probability ``mix`` the batch goes to a sorted position drawn from
    ``pos_cdf``; otherwise to a server drawn from ``w_cdf``.
    """

    pos_cdf: np.ndarray
    w_cdf: np.ndarray
    mix: float


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p)
    c[-1] = 1.0
    return c


def compile_policy(policy: Policy, N: int, mu_list=None) -> KernelPolicy:
    if policy.state_dependent:
        raise InvalidPolicyParams("state-dependent custom policies run only through engine.step")
    weights = server_weights(N, mu_list)
    zeros = np.arange(N, dtype=np.int64)
    if policy.kind == RANDOM:
        return KernelPolicy(_cdf(np.full(N, 1.0 / N)), _cdf(weights), 0.0)
    if policy.kind == P_JSQ:
        jsq = np.zeros(N)
        jsq[0] = 1.0
        return KernelPolicy(_cdf(jsq), _cdf(weights), policy.p)
    probs = position_probabilities(policy, zeros).probs
    return KernelPolicy(_cdf(probs), _cdf(weights), 1.0)


def dispatch(policy: Policy, state, rng: np.random.Generator, weights=None) -> int:
    """Draw the server that receives this slot's batch.

    A sorted position is drawn first; ties in queue length are broken
    uniformly among the tied servers.
    """
    q = _queue_vector(state)
    N = q.size
    u = rng.random(3)
    if policy.state_dependent:
        kp = KernelPolicy(_cdf(position_probabilities(policy, q).probs), _cdf(np.full(N, 1.0 / N)), 1.0)
    else:
        kp = compile_policy(policy, N, None if weights is None else list(weights))
    buf = np.empty(N, dtype=np.int64)
    return int(pick_server(q, kp.pos_cdf, kp.w_cdf, kp.mix, u[0], u[1], u[2], buf))
