"""Optimal single-slot joint auction and its brute-force oracle.

The winning bundle is the one with the highest virtual value
c^e = c_r(v_r) + c_s(v_s), provided it clears the auctioneer reserve.  Each
winning bidder pays the CTR-weighted critical value: the infimum bid at
which their best bundle still wins.
"""

from __future__ import annotations

import numpy as np

from jointauction import distributions as dist_mod
from jointauction import kernels
from jointauction.distributions import DistributionSpec, NoSolutionError
from jointauction.market import AuctionInstance, InstanceBatch, neighbors
from jointauction.outcomes import RETAILER, SUPPLIER, AuctionOutcome

__all__ = [
    "UnsupportedSettingError",
    "INFEASIBLE",
    "bundle_virtual_value",
    "optimal_allocate",
    "critical_value",
    "optimal_run",
    "brute_force_virtual_surplus",
    "exact_batch",
]

INFEASIBLE = None  # marker returned when a bidder can never win


class UnsupportedSettingError(ValueError):
    """The exact mechanism only covers the single-slot case."""


def _dist_for(dists, bidder_id: int) -> DistributionSpec:
    if isinstance(dists, DistributionSpec):
        return dists
    return dists[bidder_id]


def _virtual(instance: AuctionInstance, dists, bidder_id: int) -> float:
    return float(dist_mod.virtual_value(_dist_for(dists, bidder_id), instance.values[bidder_id]))


def bundle_virtual_value(instance: AuctionInstance, edge, dists) -> float:
    """c^e = c_r(v_r) + c_s(v_s) for edge e = (r, s)."""
    r, s = tuple(edge)
    return _virtual(instance, dists, r) + _virtual(instance, dists, s)


def _require_single_slot(instance: AuctionInstance) -> None:
    if instance.n_slots != 1:
        raise UnsupportedSettingError("exact mechanism requires m = 1")


def _argmax_edge(instance: AuctionInstance, dists):
    """Highest-virtual-value edge (lowest index on ties) and its value."""
    best_edge, best_c = None, -np.inf
    for e in instance.graph.edges:
        c = bundle_virtual_value(instance, e, dists)
        if c > best_c:
            best_edge, best_c = e, c
    return best_edge, best_c


def optimal_allocate(instance: AuctionInstance, dists) -> AuctionOutcome:
    """Allocation rule only: argmax bundle wins iff its c^e clears the reserve."""
    _require_single_slot(instance)
    out = AuctionOutcome({e: np.zeros(1) for e in instance.graph.edges})
    best_edge, best_c = _argmax_edge(instance, dists)
    if best_edge is not None and best_c >= instance.reserve:
        out.allocation[best_edge] = np.ones(1)
    return out


def brute_force_virtual_surplus(instance: AuctionInstance, dists):
    """Enumerate (c^e - v0) over all bundles; oracle for optimal_allocate."""
    best_edge, best = None, -np.inf
    for e in instance.graph.edges:
        surplus = bundle_virtual_value(instance, e, dists) - instance.reserve
        if surplus > best:
            best_edge, best = e, surplus
    if best_edge is None or best < 0.0:
        return None, None
    return best_edge, best


def critical_value(instance: AuctionInstance, dists, bidder_id: int):
    """Infimum winning bid for the bidder's best bundle, or INFEASIBLE.

    For a retailer r the relevant bundle pairs r with its highest-virtual
    neighbor s_r^M; the threshold in virtual space is
    max(v0, max over excluded bundles of c^e) - c_{s_r^M}.
    """
    _require_single_slot(instance)
    g = instance.graph
    if bidder_id not in set(g.bidder_ids):
        raise KeyError(f"unknown bidder {bidder_id}")
    nbrs = neighbors(g, bidder_id)
    partner_c = max(_virtual(instance, dists, b) for b in nbrs)
    threshold = instance.reserve
    for e in g.edges:
        if bidder_id not in e:
            threshold = max(threshold, bundle_virtual_value(instance, e, dists))
    spec = _dist_for(dists, bidder_id)
    try:
        return dist_mod.inverse_virtual_value(spec, threshold - partner_c)
    except NoSolutionError:
        return INFEASIBLE


def optimal_run(instance: AuctionInstance, dists) -> AuctionOutcome:
    """Full mechanism: winner-pays-critical, losers pay zero."""
    out = optimal_allocate(instance, dists)
    lam1 = instance.ctrs[0]
    for e, x in out.allocation.items():
        if x[0] > 0.0:
            r, s = e
            vr = critical_value(instance, dists, r)
            vs = critical_value(instance, dists, s)
            out.payments[(e, RETAILER)] = lam1 * vr
            out.payments[(e, SUPPLIER)] = lam1 * vs
    return out


def exact_batch(batch: InstanceBatch, dist: DistributionSpec):
    """Vectorized mechanism run over a sampled batch (single slot).

    Returns ``(winner, pay_r, pay_s)``: winner is the per-sample winning
    edge index (-1 when the reserve binds), and the payment arrays hold the
    CTR-weighted critical values of the winning retailer/supplier (zero for
    samples with no winner).
    """
    if batch.n_slots != 1:
        raise UnsupportedSettingError("exact mechanism requires m = 1")
    cr = np.asarray(dist_mod.virtual_value(dist, batch.vals_r), dtype=float)
    cs = np.asarray(dist_mod.virtual_value(dist, batch.vals_s), dtype=float)
    winner, thr_r, thr_s = kernels.exact_winner_thresholds(
        batch.edge_r, batch.edge_s, cr, cs, batch.reserve
    )
    lam1 = float(batch.ctrs[0])
    won = winner >= 0
    pay_r = np.zeros(batch.size)
    pay_s = np.zeros(batch.size)
    if np.any(won):
        pay_r[won] = lam1 * dist_mod.inverse_virtual_value_batch(dist, thr_r[won])
        pay_s[won] = lam1 * dist_mod.inverse_virtual_value_batch(dist, thr_s[won])
    return winner, pay_r, pay_s
