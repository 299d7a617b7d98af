"""Compiled event-driven engine for the single-server multiclass queue.

Between consecutive arrivals/departures the queue vector is constant, and
every policy here depends only on the queue vector (plus, for the
nonpreemptive rule, on which job is in service), so the allocation is
piecewise constant and the event loop is exact.
"""
from __future__ import annotations

import numba as nb
import numpy as np

from .._kernels import cost_value, priority_index

PREEMPTIVE = 0
NONPREEMPTIVE = 1
STATIC = 2

EV_START = 0
EV_ARRIVAL = 1
EV_DEPARTURE = 2
EV_HORIZON = 3
EV_RELEASE = 4


@nb.njit(cache=True)
def _select(policy, order, q, scale, mu, a, b, p, qs):
    total = 0
    for j in range(q.shape[0]):
        total += q[j]
    if total == 0:
        return -1
    if policy == STATIC:
        for k in range(order.shape[0]):
            if q[order[k]] > 0:
                return order[k]
        return -1
    for j in range(q.shape[0]):
        qs[j] = q[j] / scale
    return priority_index(qs, mu, a, b, p)


@nb.njit(cache=True)
def run_queue(policy, order, release, T, arr, counts, svc, scale, mu, a, b, p, record):
    """Simulate one replication on ``[0, T]``.

    ``arr[i, k]`` is the k-th class-i arrival epoch (padded with ``inf``),
    ``svc[i, k]`` the work the k-th class-i job brings.  The server idles
    while ``t < release`` (a negative control for work-conservation checks).

    Returns ``(n_rows, times, queue, serving, alloc, arrivals, departures,
    kinds, cost_integral)``.  With ``record`` false only the cost integral
    ``int_0^T sum_i C_i(Q_i(t)/scale) dt`` is meaningful.
    """
    d = arr.shape[0]
    cap = 3
    for i in range(d):
        cap += 2 * counts[i]
    if not record:
        cap = 1
    times = np.zeros(cap)
    queue = np.zeros((cap, d), dtype=np.int64)
    serving = np.full(cap, -1, dtype=np.int64)
    alloc = np.zeros((cap, d))
    arrivals = np.zeros((cap, d), dtype=np.int64)
    departures = np.zeros((cap, d), dtype=np.int64)
    kinds = np.zeros(cap, dtype=np.int64)

    q = np.zeros(d, dtype=np.int64)
    qs = np.zeros(d)
    na = np.zeros(d, dtype=np.int64)
    nd = np.zeros(d, dtype=np.int64)
    progress = np.zeros(d)
    tcum = np.zeros(d)
    t = 0.0
    cur = -1
    cost_rate = 0.0
    integral = 0.0
    row = 1  # row 0 is the empty initial state
    done = False

    while not done:
        # earliest arrival, lowest class on ties
        t_arr = np.inf
        i_arr = -1
        for i in range(d):
            if na[i] < counts[i] and arr[i, na[i]] < t_arr:
                t_arr = arr[i, na[i]]
                i_arr = i
        t_dep = np.inf
        if cur >= 0:
            t_dep = t + (svc[cur, nd[cur]] - progress[cur])
            if t_dep < t:
                t_dep = t
        t_rel = np.inf
        if t < release:
            t_rel = release

        t_next = t_dep
        ev = EV_DEPARTURE
        if t_arr < t_next:
            t_next = t_arr
            ev = EV_ARRIVAL
        if t_rel < t_next:
            t_next = t_rel
            ev = EV_RELEASE
        if t_next > T:
            t_next = T
            ev = EV_HORIZON

        dt = t_next - t
        if cur >= 0:
            progress[cur] += dt
            tcum[cur] += dt
        integral += cost_rate * dt
        t = t_next

        if ev == EV_HORIZON:
            if record:
                times[row] = t
                for j in range(d):
                    queue[row, j] = q[j]
                    alloc[row, j] = tcum[j]
                    arrivals[row, j] = na[j]
                    departures[row, j] = nd[j]
                serving[row] = cur
                kinds[row] = EV_HORIZON
            row += 1
            done = True
            continue

        was_empty = True
        for j in range(d):
            if q[j] > 0:
                was_empty = False
        if ev == EV_DEPARTURE:
            q[cur] -= 1
            nd[cur] += 1
            progress[cur] = 0.0
        elif ev == EV_ARRIVAL:
            q[i_arr] += 1
            na[i_arr] += 1

        if t < release:
            cur = -1
        elif policy == NONPREEMPTIVE:
            if ev == EV_DEPARTURE or ev == EV_RELEASE:
                cur = _select(policy, order, q, scale, mu, a, b, p, qs)
            elif ev == EV_ARRIVAL and cur < 0:
                if was_empty:
                    # empty system: the arriving customer is served at once
                    cur = i_arr
                else:
                    cur = _select(policy, order, q, scale, mu, a, b, p, qs)
        else:
            cur = _select(policy, order, q, scale, mu, a, b, p, qs)

        cost_rate = 0.0
        for j in range(d):
            if q[j] > 0:
                cost_rate += cost_value(q[j] / scale, a[j], b[j], p[j])

        if record:
            times[row] = t
            for j in range(d):
                queue[row, j] = q[j]
                alloc[row, j] = tcum[j]
                arrivals[row, j] = na[j]
                departures[row, j] = nd[j]
            serving[row] = cur
            kinds[row] = ev
        row += 1

    return row, times, queue, serving, alloc, arrivals, departures, kinds, integral


@nb.njit(cache=True)
def run_cost_only(policy, order, release, T, arr, counts, svc, scale, mu, a, b, p):
    out = run_queue(policy, order, release, T, arr, counts, svc, scale, mu, a, b, p, False)
    return out[8]

