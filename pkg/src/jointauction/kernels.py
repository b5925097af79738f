"""Hot Monte-Carlo inner loops.

Each kernel has a jit-compiled sample-loop implementation and a vectorized
pure-numpy twin; ``jointauction.backend`` picks between them at import time.
Both paths use the same tie-breaking (lowest edge index) and agree to
floating-point summation-order precision, which the test suite cross-checks.

Shapes: ``edge_r``/``edge_s`` are (L, n) int64 pool indices, per-side value
or virtual-value pools are (L, n) float64, ``lam`` is the (m,) CTR vector.
"""

from __future__ import annotations

import numpy as np

from jointauction.backend import USE_NUMBA

__all__ = ["exact_winner_thresholds", "rvcg_revenue"]


# ---------------------------------------------------------------------------
# Exact single-slot mechanism: winner and virtual-space payment thresholds.
# ---------------------------------------------------------------------------

def _exact_loop(edge_r, edge_s, cr, cs, v0):
    L, n = edge_r.shape
    winner = np.full(L, -1, np.int64)
    thr_r = np.full(L, np.nan)
    thr_s = np.full(L, np.nan)
    for l in range(L):
        best = -np.inf
        w = -1
        for k in range(n):
            c = cr[l, edge_r[l, k]] + cs[l, edge_s[l, k]]
            if c > best:
                best = c
                w = k
        if w < 0 or best < v0:
            continue
        rstar = edge_r[l, w]
        sstar = edge_s[l, w]
        mr = v0
        ms = v0
        for k in range(n):
            c = cr[l, edge_r[l, k]] + cs[l, edge_s[l, k]]
            if edge_r[l, k] != rstar and c > mr:
                mr = c
            if edge_s[l, k] != sstar and c > ms:
                ms = c
        winner[l] = w
        thr_r[l] = mr - cs[l, sstar]
        thr_s[l] = ms - cr[l, rstar]
    return winner, thr_r, thr_s


def _exact_numpy(edge_r, edge_s, cr, cs, v0):
    L, n = edge_r.shape
    rows = np.arange(L)
    ce = np.take_along_axis(cr, edge_r, 1) + np.take_along_axis(cs, edge_s, 1)
    w = ce.argmax(axis=1)
    wins = ce[rows, w] >= v0
    rstar = edge_r[rows, w]
    sstar = edge_s[rows, w]
    other_r = np.where(edge_r != rstar[:, None], ce, -np.inf).max(axis=1)
    other_s = np.where(edge_s != sstar[:, None], ce, -np.inf).max(axis=1)
    thr_r = np.maximum(v0, other_r) - cs[rows, sstar]
    thr_s = np.maximum(v0, other_s) - cr[rows, rstar]
    winner = np.where(wins, w, -1).astype(np.int64)
    thr_r = np.where(wins, thr_r, np.nan)
    thr_s = np.where(wins, thr_s, np.nan)
    return winner, thr_r, thr_s


# ---------------------------------------------------------------------------
# Revised-VCG baseline: clamped and unclamped Clarke revenue per sample.
# ---------------------------------------------------------------------------

def _rvcg_loop(edge_r, edge_s, br, bs, lam):
    L, n = edge_r.shape
    m = lam.shape[0]
    top = min(m, n)
    rev_c = np.zeros(L)
    rev_u = np.zeros(L)
    for l in range(L):
        sb = np.empty(n)
        for k in range(n):
            sb[k] = br[l, k] + bs[l, k]
        slot_of = np.full(n, -1, np.int64)
        used = np.zeros(n, np.bool_)
        W = 0.0
        for slot in range(top):
            best = -1.0
            bi = -1
            for k in range(n):
                if not used[k] and sb[k] > best:
                    best = sb[k]
                    bi = k
            used[bi] = True
            slot_of[bi] = slot
            W += lam[slot] * sb[bi]
        for side in range(2):
            idx = edge_r[l] if side == 0 else edge_s[l]
            bid = br[l] if side == 0 else bs[l]
            for p in range(n):
                own = 0.0
                seen = False
                for k in range(n):
                    if idx[k] == p:
                        seen = True
                        if slot_of[k] >= 0:
                            own += lam[slot_of[k]] * bid[k]
                if not seen:
                    continue
                # welfare with every bundle of this bidder removed
                usedm = np.zeros(n, np.bool_)
                Wm = 0.0
                for slot in range(top):
                    best = -1.0
                    bi = -1
                    for k in range(n):
                        if idx[k] != p and not usedm[k] and sb[k] > best:
                            best = sb[k]
                            bi = k
                    if bi < 0:
                        break
                    usedm[bi] = True
                    Wm += lam[slot] * sb[bi]
                pay = Wm - (W - own)
                rev_u[l] += pay
                if pay > 0.0:
                    rev_c[l] += pay
    return rev_c, rev_u


def _rvcg_numpy(edge_r, edge_s, br, bs, lam):
    L, n = edge_r.shape
    m = lam.shape[0]
    top = min(m, n)
    lam_top = lam[:top]
    sb = br + bs
    order = np.argsort(-sb, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(n)[None, :].repeat(L, 0), axis=1)
    slot_of = np.where(ranks < top, ranks, -1)
    lam_of = np.where(slot_of >= 0, lam[np.clip(slot_of, 0, m - 1)], 0.0)
    W = (lam_of * sb).sum(axis=1)

    rev_c = np.zeros(L)
    rev_u = np.zeros(L)
    for side, idx, bid in ((0, edge_r, br), (1, edge_s, bs)):
        for p in range(n):
            mine = idx == p
            seen = mine.any(axis=1)
            own = (np.where(mine, lam_of * bid, 0.0)).sum(axis=1)
            sbm = np.where(mine, -np.inf, sb)
            topvals = -np.sort(-sbm, axis=1)[:, :top]
            Wm = np.where(np.isfinite(topvals), topvals * lam_top[None, :], 0.0).sum(axis=1)
            pay = np.where(seen, Wm - (W - own), 0.0)
            rev_u += pay
            rev_c += np.maximum(pay, 0.0)
    return rev_c, rev_u


if USE_NUMBA:
    import numba as nb

    exact_winner_thresholds = nb.njit(cache=True)(_exact_loop)
    rvcg_revenue = nb.njit(cache=True)(_rvcg_loop)
else:
    exact_winner_thresholds = _exact_numpy
    rvcg_revenue = _rvcg_numpy
