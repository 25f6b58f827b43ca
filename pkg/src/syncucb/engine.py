"""Compiled episode engine for long Monte-Carlo runs.

Implements exactly the round loop of policy.TwoStageSystem /
SingleStageSystem as a numba kernel over flat arrays, so 400-run sweeps
finish in seconds on one core.  All randomness (reward noise, tie-break
draws) is pre-drawn outside the kernel; a trace-equality test pins this
engine to the object-level implementation.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .belief import CONTRACTION_REFRESH, DRIFT_TOL, REFRESH_EVERY

# mode codes
SINGLE_STAGE = 0
NAIVE = 1
SYNC_POST = 2
SYNC_PRE = 3

MODE_CODES = {
    "single_stage": SINGLE_STAGE,
    "naive": NAIVE,
    "sync_post": SYNC_POST,
    "sync_pre": SYNC_PRE,
}

# status codes returned by the kernel
OK = 0
PD_FAILURE = 1

TIE_TOL = 1e-12


@njit(cache=True)
def _sqrt_beta(t, lam, d):
    tp = t if t > 1 else 1
    return math.sqrt(lam) + math.sqrt(
        2.0 * math.log(tp) + d * math.log((d * lam + tp) / (d * lam))
    )


@njit(cache=True)
def _quad(cov, x):
    # x' cov x
    d = x.shape[0]
    acc = 0.0
    for i in range(d):
        row = 0.0
        for j in range(d):
            row += cov[i, j] * x[j]
        acc += row * x[i]
    return acc


@njit(cache=True)
def _drift(cov, prec):
    d = cov.shape[0]
    worst = 0.0
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += cov[i, k] * prec[k, j]
            if i == j:
                acc -= 1.0
            if abs(acc) > worst:
                worst = abs(acc)
    return worst


@njit(cache=True)
def _rank_one(prec, cov, u, c, count):
    """In-place precision += c u u'; Sherman-Morrison on cov; refresh per
    the drift policy.  Returns (new_count, status)."""
    d = u.shape[0]
    su = cov @ u
    denom = 1.0 + c * (u @ su)
    if c < 0.0 and denom < 1e-12:
        return count, PD_FAILURE
    for i in range(d):
        for j in range(d):
            prec[i, j] += c * u[i] * u[j]
            cov[i, j] -= (c / denom) * su[i] * su[j]
    for i in range(d):
        for j in range(i):
            s = 0.5 * (cov[i, j] + cov[j, i])
            cov[i, j] = s
            cov[j, i] = s
    count += 1
    if count >= REFRESH_EVERY or denom > CONTRACTION_REFRESH or _drift(cov, prec) > DRIFT_TOL:
        cov[:, :] = np.linalg.inv(prec)
        for i in range(d):
            for j in range(i):
                s = 0.5 * (cov[i, j] + cov[j, i])
                cov[i, j] = s
                cov[j, i] = s
        count = 0
    return count, OK


@njit(cache=True)
def _observe(mean, prec, cov, x, r, count):
    b = prec @ mean + r * x
    count, status = _rank_one(prec, cov, x, 1.0, count)
    if status != OK:
        return count, status
    mean[:] = cov @ b
    return count, OK


@njit(cache=True)
def _select(mean, cov, embeds, cand, sb, tie_seeded, tie_u, cursor):
    """Argmax of UCB over candidate indices; returns (action, cursor).

    cand must be sorted ascending.  Consumes one tie_u value only when a
    genuine tie is broken with seeded_uniform, mirroring select_action.
    """
    n = cand.shape[0]
    if n == 1:
        return cand[0], cursor
    scores = np.empty(n)
    best = -1.0e300
    for i in range(n):
        x = embeds[cand[i]]
        s = (x @ mean) + sb * math.sqrt(_quad(cov, x))
        scores[i] = s
        if s > best:
            best = s
    n_tied = 0
    for i in range(n):
        if scores[i] >= best - TIE_TOL:
            n_tied += 1
    if n_tied == 1 or not tie_seeded:
        for i in range(n):
            if scores[i] >= best - TIE_TOL:
                return cand[i], cursor
    pick = int(tie_u[cursor] * n_tied)
    cursor += 1
    k = 0
    for i in range(n):
        if scores[i] >= best - TIE_TOL:
            if k == pick:
                return cand[i], cursor
            k += 1
    return cand[n - 1], cursor


@njit(cache=True)
def _sync(n_mean, n_prec, n_cov, u, tm, tv, count):
    """Minimal-KL match of (mean, var) along u to targets; in-place."""
    v = _quad(n_cov, u)
    shift = (tm - (u @ n_mean)) / v
    n_mean += shift * (n_cov @ u)
    c = 1.0 / tv - 1.0 / v
    return _rank_one(n_prec, n_cov, u, c, count)


@njit(cache=True)
def run_kernel(
    mode,
    update_recommended,
    tie_seeded,
    r_mean,
    r_prec,
    r_cov,
    lam_r,
    n_means,
    n_precs,
    n_covs,
    lam_n,
    phi,
    phis,
    pools,
    action_means,
    action_regrets,
    sd_r,
    noise,
    tie_u,
    actions_out,
    noms_out,
    regret_out,
    sync_out,
):
    """Run T rounds in place; returns (status, failing_round).

    Shapes: phi (A, d); phis (N, A, dn); pools (N, A) bool; noise (T, A);
    outputs length T.  mode/tie codes per module constants.
    """
    T = noise.shape[0]
    A = phi.shape[0]
    N = n_means.shape[0]
    d = phi.shape[1]
    dn = phis.shape[2]
    cursor = 0
    r_count = 0
    n_counts = np.zeros(N, dtype=np.int64)

    all_actions = np.arange(A)
    pool_idx = []
    for n in range(N):
        members = np.empty(A, dtype=np.int64)
        k = 0
        for a in range(A):
            if pools[n, a]:
                members[k] = a
                k += 1
        pool_idx.append(members[:k])

    pre_mean = np.empty(d)
    pre_cov = np.empty((d, d))

    for t in range(T):
        sb_r = _sqrt_beta(t, lam_r, d)

        if mode == SINGLE_STAGE:
            a_t, cursor = _select(
                r_mean, r_cov, phi, all_actions, sb_r, tie_seeded, tie_u, cursor
            )
            r = action_means[a_t] + sd_r * noise[t, a_t]
            r_count, status = _observe(r_mean, r_prec, r_cov, phi[a_t], r, r_count)
            if status != OK:
                return status, t
            actions_out[t] = a_t
            regret_out[t] = action_regrets[a_t]
            sync_out[t] = 0
            continue

        sb_n = _sqrt_beta(t, lam_n, dn)
        noms = np.empty(N, dtype=np.int64)
        for n in range(N):
            noms[n], cursor = _select(
                n_means[n], n_covs[n], phis[n], pool_idx[n], sb_n, tie_seeded, tie_u, cursor
            )
            noms_out[t, n] = noms[n]

        # deduplicated, sorted nomination set
        seen = np.zeros(A, dtype=np.bool_)
        for n in range(N):
            seen[noms[n]] = True
        cand = np.empty(N, dtype=np.int64)
        k = 0
        for a in range(A):
            if seen[a]:
                cand[k] = a
                k += 1
        a_t, cursor = _select(
            r_mean, r_cov, phi, cand[:k], sb_r, tie_seeded, tie_u, cursor
        )

        r = action_means[a_t] + sd_r * noise[t, a_t]

        if mode == SYNC_PRE:
            pre_mean[:] = r_mean
            pre_cov[:, :] = r_cov

        r_count, status = _observe(r_mean, r_prec, r_cov, phi[a_t], r, r_count)
        if status != OK:
            return status, t

        n_synced = 0
        for n in range(N):
            a_n = noms[n]
            obs = a_t if update_recommended else a_n
            if mode == SYNC_PRE:
                v_n = _quad(n_covs[n], phis[n, a_n])
                v_r = _quad(pre_cov, phi[a_n])
                if math.sqrt(v_n) > math.sqrt(v_r):
                    tm = phi[a_n] @ pre_mean
                    n_counts[n], status = _sync(
                        n_means[n], n_precs[n], n_covs[n], phis[n, a_n], tm, v_r, n_counts[n]
                    )
                    if status != OK:
                        return status, t
                    n_synced += 1
                n_counts[n], status = _observe(
                    n_means[n], n_precs[n], n_covs[n], phis[n, obs], r, n_counts[n]
                )
                if status != OK:
                    return status, t
            else:
                n_counts[n], status = _observe(
                    n_means[n], n_precs[n], n_covs[n], phis[n, obs], r, n_counts[n]
                )
                if status != OK:
                    return status, t
                if mode == SYNC_POST:
                    v_n = _quad(n_covs[n], phis[n, a_n])
                    v_r = _quad(r_cov, phi[a_n])
                    if math.sqrt(v_n) > math.sqrt(v_r):
                        tm = phi[a_n] @ r_mean
                        n_counts[n], status = _sync(
                            n_means[n], n_precs[n], n_covs[n], phis[n, a_n], tm, v_r, n_counts[n]
                        )
                        if status != OK:
                            return status, t
                        n_synced += 1

        actions_out[t] = a_t
        regret_out[t] = action_regrets[a_t]
        sync_out[t] = n_synced

    return OK, -1


__all__ = ["run_kernel", "MODE_CODES", "OK", "PD_FAILURE", "SINGLE_STAGE", "NAIVE", "SYNC_POST", "SYNC_PRE"]
