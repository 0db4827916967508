"""Hot loops of the slot dynamics.

All randomness arrives as pre-drawn arrays, so the compiled and the
``HTSLB_DISABLE_JIT=1`` paths consume identical inputs and return identical
outputs.
"""
import numpy as np

from ._accel import njit

# columns of the per-batch accumulator
ACC_SLOTS = 0
ACC_U = 1
ACC_U2 = 2
ACC_CROSS = 3
ACC_ARRIVALS = 4
ACC_SERVICE = 5
ACC_Q = 6
ACC_Q2 = 7
ACC_WIDTH = 8

OK = 0
DIVERGED = 1


@njit
def pick_server(q, pos_cdf, w_cdf, mix, u_mix, u_pick, u_tie, buf):
    """Server index for this slot's batch.

    With probability ``mix`` a sorted position is drawn from ``pos_cdf`` and
    resolved to a server, ties broken uniformly by ``u_tie``. Otherwise the
    server is drawn directly from ``w_cdf``.
    """
    n = q.shape[0]
    if u_mix < mix:
        pos = 0
        while pos < n - 1 and u_pick >= pos_cdf[pos]:
            pos += 1
        if pos == 0:
            v = q[0]
            for i in range(1, n):
                if q[i] < v:
                    v = q[i]
        else:
            for i in range(n):
                buf[i] = q[i]
            buf.sort()
            v = buf[pos]
        count = 0
        for i in range(n):
            if q[i] == v:
                count += 1
        j = int(u_tie * count)
        if j >= count:
            j = count - 1
        for i in range(n):
            if q[i] == v:
                if j == 0:
                    return i
                j -= 1
        return -1
    k = 0
    while k < n - 1 and u_pick >= w_cdf[k]:
        k += 1
    return k


@njit
def apply_step(q, target, a_total, s, q_next, u):
    """Queue update with unused service; fills ``q_next`` and ``u`` in place.

    Returns (sum of u, sum of q_next).
    """
    u_l1 = 0
    q_l1 = 0
    for n in range(q.shape[0]):
        a = a_total if n == target else 0
        un = s[n] - a - q[n]
        if un < 0:
            un = 0
        u[n] = un
        q_next[n] = q[n] + a - s[n] + un
        u_l1 += un
        q_l1 += q_next[n]
    return u_l1, q_l1


@njit
def advance(q, t0, a_tot, s, u_disp, pos_cdf, w_cdf, mix,
            warmup, post_len, thin, state_stride, n_batches,
            obs_tot, obs_states, counters, acc, trace, trace_on, ceiling, check):
    """Run ``len(a_tot)`` slots starting at slot ``t0`` with state ``q`` (updated in place).

    Observations of sum(q) at the start of a slot are written every ``thin``
    post-warmup slots; every ``state_stride``-th observation also stores the
    full vector. ``counters`` holds (observations written, states written,
    invariant violations, slot at divergence).

    Returns OK or DIVERGED.
    """
    n = q.shape[0]
    steps = a_tot.shape[0]
    buf = np.empty(n, dtype=np.int64)
    q_next = np.empty(n, dtype=np.int64)
    u = np.empty(n, dtype=np.int64)
    for i in range(steps):
        t = t0 + i
        q_l1 = 0
        for k in range(n):
            q_l1 += q[k]
        post = t - warmup
        if post >= 0 and post % thin == 0:
            j = counters[0]
            if j < obs_tot.shape[0]:
                obs_tot[j] = q_l1
                if j % state_stride == 0 and counters[1] < obs_states.shape[0]:
                    for k in range(n):
                        obs_states[counters[1], k] = q[k]
                    counters[1] += 1
                counters[0] = j + 1
        target = pick_server(q, pos_cdf, w_cdf, mix,
                             u_disp[i, 0], u_disp[i, 1], u_disp[i, 2], buf)
        a = a_tot[i]
        u_l1, qn_l1 = apply_step(q, target, a, s[i], q_next, u)
        s_l1 = 0
        for k in range(n):
            s_l1 += s[i, k]
        if check:
            bad = 0
            for k in range(n):
                ak = a if k == target else 0
                expect = s[i, k] - ak - q[k]
                if expect < 0:
                    expect = 0
                if u[k] != expect or q_next[k] < 0 or (u[k] > 0 and q_next[k] != 0):
                    bad = 1
            if qn_l1 - q_l1 != a - s_l1 + u_l1:
                bad = 1
            counters[2] += bad
        if post >= 0:
            b = (post * n_batches) // post_len
            acc[b, ACC_SLOTS] += 1
            acc[b, ACC_U] += u_l1
            acc[b, ACC_U2] += u_l1 * u_l1
            acc[b, ACC_CROSS] += qn_l1 * u_l1
            acc[b, ACC_ARRIVALS] += a
            acc[b, ACC_SERVICE] += s_l1
            acc[b, ACC_Q] += q_l1
            acc[b, ACC_Q2] += q_l1 * q_l1
        if trace_on:
            trace[i, 0] = t
            trace[i, 1] = q_l1
            trace[i, 2] = a
            trace[i, 3] = s_l1
            trace[i, 4] = u_l1
        diverged = False
        for k in range(n):
            q[k] = q_next[k]
            if q[k] > ceiling:
                diverged = True
        if diverged:
            counters[3] = t
            return DIVERGED
    return OK


@njit
def record_steps(q, a_tot, s, u_disp, pos_cdf, w_cdf, mix,
                 q_hist, targets, u_hist, q_next_hist):
    """Run slots from ``q`` keeping every pre-state, target, unused service and post-state."""
    n = q.shape[0]
    buf = np.empty(n, dtype=np.int64)
    q_next = np.empty(n, dtype=np.int64)
    u = np.empty(n, dtype=np.int64)
    for i in range(a_tot.shape[0]):
        for k in range(n):
            q_hist[i, k] = q[k]
        target = pick_server(q, pos_cdf, w_cdf, mix,
                             u_disp[i, 0], u_disp[i, 1], u_disp[i, 2], buf)
        targets[i] = target
        apply_step(q, target, a_tot[i], s[i], q_next, u)
        for k in range(n):
            u_hist[i, k] = u[k]
            q_next_hist[i, k] = q_next[k]
            q[k] = q_next[k]


@njit
def dispatch_counts(q, pos_cdf, w_cdf, mix, u_disp):
    """How often each server is picked over the rows of ``u_disp`` with ``q`` held fixed."""
    n = q.shape[0]
    buf = np.empty(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    for i in range(u_disp.shape[0]):
        counts[pick_server(q, pos_cdf, w_cdf, mix, u_disp[i, 0], u_disp[i, 1], u_disp[i, 2], buf)] += 1
    return counts
