"""Compiled inner loop of the ADMM: one fused pass over all pairs."""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def _scale(a, lam, gam, theta, kind):
    # prox(zeta) = scale * zeta, with a = ||zeta||; mirrors penalty.prox_scale
    if a <= 0.0:
        return 0.0
    soft = 1.0 - (lam / theta) / a
    if soft < 0.0:
        soft = 0.0
    if kind == 0:
        return soft
    if kind == 1:
        if a <= gam * lam:
            return soft / (1.0 - 1.0 / (gam * theta))
        return 1.0
    if a <= lam + lam / theta:
        return soft
    if a <= gam * lam:
        mid = 1.0 - (gam * lam / ((gam - 1.0) * theta)) / a
        if mid < 0.0:
            mid = 0.0
        return mid / (1.0 - 1.0 / ((gam - 1.0) * theta))
    return 1.0


@numba.njit(cache=True)
def pair_sweep(beta, delta, upsilon, rows, cols, lam, gam, theta, kind):
    """Delta and upsilon updates for every pair, in place.

    Returns A'(theta*delta - upsilon) for the next beta step, the squared primal
    residual, A'(delta_new - delta_old) (the dual residual before scaling by theta),
    and the squared norms of A beta, delta and A' upsilon used by relative tolerances.
    """
    n, p = beta.shape
    m = rows.shape[0]
    grad = np.zeros((n, p))
    ddelta = np.zeros((n, p))
    atu = np.zeros((n, p))
    ab_sq = 0.0
    d_sq = 0.0
    diff = np.empty(p)
    zeta = np.empty(p)
    primal_sq = 0.0
    for k in range(m):
        i = rows[k]
        j = cols[k]
        a2 = 0.0
        for c in range(p):
            diff[c] = beta[i, c] - beta[j, c]
            zeta[c] = diff[c] + upsilon[k, c] / theta
            a2 += zeta[c] * zeta[c]
        s = _scale(math.sqrt(a2), lam, gam, theta, kind)
        for c in range(p):
            nd = s * zeta[c]
            r = diff[c] - nd
            u = upsilon[k, c] + theta * r
            upsilon[k, c] = u
            primal_sq += r * r
            ab_sq += diff[c] * diff[c]
            d_sq += nd * nd
            atu[i, c] += u
            atu[j, c] -= u
            dd = nd - delta[k, c]
            ddelta[i, c] += dd
            ddelta[j, c] -= dd
            delta[k, c] = nd
            w = theta * nd - u
            grad[i, c] += w
            grad[j, c] -= w
    atu_sq = 0.0
    for i in range(n):
        for c in range(p):
            atu_sq += atu[i, c] * atu[i, c]
    return grad, primal_sq, ddelta, ab_sq, d_sq, atu_sq
