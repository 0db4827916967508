"""Slot-by-slot simulation of N parallel queues under a dispatch policy.

Order of events in a slot: observe queue lengths, pick the target server,
route the whole arrival batch there, draw services, then apply
Q(t+1) = Q(t) + A(t) - S(t) + U(t) with U(t) = max(S - A - Q, 0).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DivergenceGuard, DuplicateSeeds, InvalidParameter
from .kernels import ACC_WIDTH, DIVERGED
from .model import SystemConfig
from .policies import Policy, compile_policy, dispatch, server_weights
from .processes import (COMMON, SUM, ArrivalProcess, ServiceProcess, build_arrival_process,
                        build_service_process, draw_values, sample)

CHUNK = 1 << 15
N_BATCHES = 32
DEFAULT_MAX_STATES = 4096
TRACE_HEADER = "# hts-lb schema v1\nt,sum_q,a_total,s_total,u_l1"


@dataclass(frozen=True)
class QueueState:
    q: np.ndarray
    t: int = 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.int64)
        if q.ndim != 1 or q.size == 0:
            raise InvalidParameter("queue state must be a nonempty vector")
        if np.any(q < 0):
            raise InvalidParameter("queue lengths must be nonnegative")
        object.__setattr__(self, "q", q)

    @classmethod
    def empty(cls, N: int) -> "QueueState":
        return cls(np.zeros(N, dtype=np.int64), 0)


@dataclass(frozen=True)
class StepRecord:
    a_total: int
    a: np.ndarray
    s: np.ndarray
    u: np.ndarray
    q_next_l1: int
    u_l1: int
    cross: int


@dataclass(frozen=True)
class RunningSums:
    """Post-warmup per-batch integer sums; columns follow ``kernels.ACC_*``."""

    batches: np.ndarray

    def __add__(self, other: "RunningSums") -> "RunningSums":
        return RunningSums(self.batches + other.batches)

    def _rows(self, second_half: bool) -> np.ndarray:
        return self.batches[self.batches.shape[0] // 2:] if second_half else self.batches

    def total(self, col: int, second_half: bool = False) -> int:
        return int(self._rows(second_half)[:, col].sum())

    @property
    def slots(self) -> int:
        return self.total(kernels.ACC_SLOTS)

    def mean(self, col: int, second_half: bool = False) -> float:
        n = self.total(kernels.ACC_SLOTS, second_half)
        return self.total(col, second_half) / n if n else math.nan

    def batch_means(self, col: int) -> np.ndarray:
        cnt = self.batches[:, kernels.ACC_SLOTS]
        keep = cnt > 0
        return self.batches[keep, col] / cnt[keep]


@dataclass(frozen=True)
class ReplicationSummary:
    seed: int
    n_obs: int
    mean_scaled: float
    sums: RunningSums
    violations: int


@dataclass(frozen=True)
class SteadyStateSample:
    """Post-warmup output of one or more runs.

    ``scaled_totals`` concatenates replications in order;
    ``replications[i].n_obs`` gives the split points.
    """

    scaled_totals: np.ndarray
    batch_means: np.ndarray
    records_summary: RunningSums
    states: np.ndarray
    scale: float
    replications: tuple
    config: SystemConfig = field(repr=False)
    policy_name: str = ""

    @property
    def size(self) -> int:
        return int(self.scaled_totals.size)

    def per_replication(self) -> list:
        cuts = np.cumsum([r.n_obs for r in self.replications])[:-1]
        return np.split(self.scaled_totals, cuts)

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.replications)


def batch_means(x: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.empty(0)
    parts = np.array_split(x, min(n_batches, x.size))
    return np.array([p.mean() for p in parts])


def draw_chunk(streams, arrivals: ArrivalProcess, services: ServiceProcess, size: int):
    """Pre-draw one chunk of randomness: arrival totals, services, dispatch uniforms.

    ``streams`` holds one generator each for arrivals, services and dispatch,
    so the values for a given slot do not depend on how slots are chunked.
    """
    rng_a, rng_s, rng_d = streams
    N = services.n_servers
    if arrivals.mode == SUM:
        vals = draw_values(arrivals.component, rng_a.random((size, arrivals.multiplicity)))
        a_tot = vals.sum(axis=1)
    else:
        a_tot = arrivals.multiplicity * draw_values(arrivals.component, rng_a.random(size))
    if services.coupling == COMMON:
        v = draw_values(services.specs[0], rng_s.random(size))
        s = np.repeat(v[:, None], N, axis=1)
    else:
        u = rng_s.random((size, N))
        distinct = {}
        for n, spec in enumerate(services.specs):
            distinct.setdefault(spec, []).append(n)
        if len(distinct) == 1:
            s = draw_values(services.specs[0], u)
        else:
            s = np.empty((size, N), dtype=np.int64)
            for spec, cols in distinct.items():
                s[:, cols] = draw_values(spec, u[:, cols])
    u_disp = rng_d.random((size, 3))
    return (np.ascontiguousarray(a_tot, dtype=np.int64),
            np.ascontiguousarray(s, dtype=np.int64), u_disp)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def make_streams(seed: int) -> tuple:
    """Independent arrival, service and dispatch generators derived from one seed."""
    return tuple(np.random.Generator(np.random.PCG64(ss))
                 for ss in np.random.SeedSequence(int(seed)).spawn(3))


def transition(state: QueueState, target: int, a_total: int, s) -> tuple:
    """Apply one slot's dynamics for a known target, batch size and service vector."""
    q = state.q
    s = np.asarray(s, dtype=np.int64)
    q_next = np.empty_like(q)
    u = np.empty_like(q)
    u_l1, q_l1 = kernels.apply_step(q, int(target), int(a_total), s, q_next, u)
    a = np.zeros_like(q)
    a[target] = a_total
    rec = StepRecord(int(a_total), a, s.copy(), u, int(q_l1), int(u_l1), int(q_l1) * int(u_l1))
    return QueueState(q_next, state.t + 1), rec


def step(state: QueueState, policy: Policy, arrival: ArrivalProcess, services: ServiceProcess,
         rng: np.random.Generator, weights=None, ceiling: Optional[int] = None) -> tuple:
    """One slot from ``state``; returns (next state, StepRecord).

    Works with any policy, including state-dependent custom ones.
    """
    target = dispatch(policy, state, rng, weights)
    if arrival.mode == SUM:
        a_total = sum(sample(arrival.component, rng) for _ in range(arrival.multiplicity))
    else:
        a_total = arrival.multiplicity * sample(arrival.component, rng)
    N = state.q.size
    if services.coupling == COMMON:
        s = np.full(N, sample(services.specs[0], rng), dtype=np.int64)
    else:
        s = np.array([sample(services.spec_for(n), rng) for n in range(N)], dtype=np.int64)
    nxt, rec = transition(state, target, a_total, s)
    if ceiling is not None and np.any(nxt.q > ceiling):
        raise DivergenceGuard(f"queue exceeded ceiling {ceiling} at slot {state.t}")
    return nxt, rec


def run(config: SystemConfig, policy: Policy, seed: Optional[int] = None, *,
        trace_path: Optional[str] = None, max_states: int = DEFAULT_MAX_STATES,
        check: bool = False, chunk: int = CHUNK) -> SteadyStateSample:
    """Simulate ``config.horizon`` slots from the empty state.

    The first ``config.warmup`` slots are discarded. The scaled total
    queue is observed every ``config.thin`` slots afterwards.
    ``check=True`` counts per-step invariant violations inside the kernel.
    """
    seed = config.seed if seed is None else int(seed)
    kp = compile_policy(policy, config.N, config.mu_list)
    arrivals = build_arrival_process(config)
    services = build_service_process(config)
    streams = make_streams(seed)
    N = config.N
    horizon, warmup, thin = config.horizon, config.warmup, config.thin
    post_len = horizon - warmup
    n_obs = -(-post_len // thin)
    stride = max(1, -(-n_obs // max_states))
    obs_tot = np.zeros(n_obs, dtype=np.int64)
    obs_states = np.zeros((-(-n_obs // stride), N), dtype=np.int64)
    counters = np.zeros(4, dtype=np.int64)
    acc = np.zeros((N_BATCHES, ACC_WIDTH), dtype=np.int64)
    q = np.zeros(N, dtype=np.int64)
    no_trace = np.zeros((0, 5), dtype=np.int64)
    fh = None
    if trace_path is not None:
        fh = open(trace_path, "w")
        fh.write(TRACE_HEADER + "\n")
    try:
        t = 0
        while t < horizon:
            c = min(chunk, horizon - t)
            a_tot, s, u_disp = draw_chunk(streams, arrivals, services, c)
            trace = np.zeros((c, 5), dtype=np.int64) if fh else no_trace
            status = kernels.advance(
                q, t, a_tot, s, u_disp, kp.pos_cdf, kp.w_cdf, kp.mix,
                warmup, post_len, thin, stride, N_BATCHES,
                obs_tot, obs_states, counters, acc, trace, fh is not None,
                config.ceiling, check,
            )
            if fh is not None:
                done = c if status != DIVERGED else int(counters[3]) - t + 1
                np.savetxt(fh, trace[:done], fmt="%d", delimiter=",")
            if status == DIVERGED:
                raise DivergenceGuard(
                    f"a queue exceeded the ceiling {config.ceiling} at slot {int(counters[3])}"
                )
            t += c
    finally:
        if fh is not None:
            fh.close()
    scale = config.scale_factor
    scaled = obs_tot.astype(float) * scale
    sums = RunningSums(acc)
    rep = ReplicationSummary(seed, n_obs, float(scaled.mean()), sums, int(counters[2]))
    return SteadyStateSample(
        scaled_totals=scaled,
        batch_means=batch_means(scaled),
        records_summary=sums,
        states=obs_states[: int(counters[1])],
        scale=scale,
        replications=(rep,),
        config=config,
        policy_name=policy.name,
    )


def default_seeds(config: SystemConfig, R: int) -> list:
    return [(config.seed + i) % 2**64 for i in range(R)]


def _run_one(args):
    config, policy, seed, kwargs = args
    return run(config, policy, seed, **kwargs)


def merge(samples: Sequence[SteadyStateSample]) -> SteadyStateSample:
    scaled = np.concatenate([s.scaled_totals for s in samples])
    sums = samples[0].records_summary
    for s in samples[1:]:
        sums = sums + s.records_summary
    return SteadyStateSample(
        scaled_totals=scaled,
        batch_means=batch_means(scaled),
        records_summary=sums,
        states=np.concatenate([s.states for s in samples]),
        scale=samples[0].scale,
        replications=tuple(r for s in samples for r in s.replications),
        config=samples[0].config,
        policy_name=samples[0].policy_name,
    )


def replicate(config: SystemConfig, policy: Policy, R: int,
              seed_list: Optional[Sequence[int]] = None, jobs: int = 1,
              **run_kwargs) -> SteadyStateSample:
    """R independent runs merged in seed order.

    Per-replication summaries are in ``.replications``. ``jobs > 1`` farms
    replications out to worker processes; results do not depend on ``jobs``.
    """
    if int(R) != R or R < 1:
        raise InvalidParameter(f"R: must be a positive integer, got {R}")
    seeds = list(seed_list) if seed_list is not None else default_seeds(config, R)
    if len(seeds) != R:
        raise InvalidParameter(f"seed_list has {len(seeds)} entries, expected {R}")
    if len(set(seeds)) != len(seeds):
        raise DuplicateSeeds(f"replication seeds must be distinct: {seeds}")
    trace_path = run_kwargs.pop("trace_path", None)
    tasks = []
    for i, s in enumerate(seeds):
        kw = dict(run_kwargs)
        if trace_path is not None:
            root, ext = os.path.splitext(trace_path)
            kw["trace_path"] = trace_path if R == 1 else f"{root}_r{i}{ext}"
        tasks.append((config, policy, s, kw))
    jobs = max(1, min(int(jobs), R))
    if jobs == 1:
        samples = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_run_one, tasks))
    return merge(samples)


def step_weights(config: SystemConfig) -> np.ndarray:
    return server_weights(config.N, config.mu_list)
