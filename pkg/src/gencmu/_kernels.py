"""Scalar numba kernels shared by the policy layer and the event engine.

Both :meth:`gencmu.mincurve.MinCurve.priority_class` and the compiled
simulator call :func:`priority_index` so that the class selected at an
event is bit-identical in both places.
"""
import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def cost_value(x, a, b, p):
    # a^{1/p} * ((1 + b x^p / a)^{1/p} - 1), written to stay accurate near 0
    if x <= 0.0:
        return 0.0
    return a ** (1.0 / p) * math.expm1(math.log1p(b * x**p / a) / p)


@nb.njit(cache=True)
def cost_deriv(x, a, b, p):
    if x <= 0.0:
        return 0.0
    bxp = b * x**p
    r = bxp / (a + bxp)
    return b ** (1.0 / p) * r ** ((p - 1.0) / p)


@nb.njit(cache=True)
def priority_index(q, mu, a, b, p):
    """Smallest index attaining max_j mu_j C_j'(q_j); -1 when q == 0."""
    best = -1
    best_val = 0.0
    for j in range(q.shape[0]):
        if q[j] <= 0.0:
            continue
        v = mu[j] * cost_deriv(q[j], a[j], b[j], p[j])
        if best < 0 or v > best_val:
            best = j
            best_val = v
    return best


def warmup():
    z = np.zeros(1)
    priority_index(np.ones(1), np.ones(1), np.ones(1), np.ones(1), 2.0 + z)
    cost_value(1.0, 1.0, 1.0, 2.0)
