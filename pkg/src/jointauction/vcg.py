"""Revised-VCG multi-slot baseline (Clarke payments with bidder removal).

Bundles are ranked by stacked bid b_r + b_s and matched to slots in CTR
order, which is welfare-optimal because the CTR vector is sorted.  A
bidder's Clarke payment removes all of their bundles, and is clamped at
zero; the unclamped value is kept available for diagnostics.
"""

from __future__ import annotations

import numpy as np

from jointauction import kernels
from jointauction.market import AuctionInstance, InstanceBatch
from jointauction.outcomes import RETAILER, SUPPLIER, AuctionOutcome

__all__ = ["vcg_allocate", "vcg_price", "rvcg_batch_revenue"]


def _stacked_bids(instance: AuctionInstance) -> dict:
    return {
        e: instance.values[e[0]] + instance.values[e[1]] for e in instance.graph.edges
    }


def _assign(instance: AuctionInstance, edges=None) -> dict:
    """Greedy slot assignment {edge: slot} over the given edge subset."""
    sb = _stacked_bids(instance)
    pool = list(instance.graph.edges if edges is None else edges)
    # sort by descending stacked bid, ties by edge order (lowest index wins)
    order = {e: k for k, e in enumerate(instance.graph.edges)}
    pool.sort(key=lambda e: (-sb[e], order[e]))
    return {e: slot for slot, e in enumerate(pool[: instance.n_slots])}


def _welfare(instance: AuctionInstance, assignment: dict) -> float:
    sb = _stacked_bids(instance)
    lam = instance.ctrs
    return sum(lam[slot] * sb[e] for e, slot in assignment.items())


def vcg_allocate(instance: AuctionInstance) -> dict:
    """Welfare-maximizing assignment of top bundles to slots, {edge: slot}."""
    return _assign(instance)


def vcg_price(instance: AuctionInstance, clamp: bool = True) -> AuctionOutcome:
    """Clarke payments with removal of all bundles incident to a bidder.

    Each bidder's payment is split across their allocated bundles
    proportionally to the CTR-weighted own bid, so the outcome records a
    per-bundle per-side breakdown.
    """
    assignment = vcg_allocate(instance)
    lam = instance.ctrs
    out = AuctionOutcome({e: np.zeros(instance.n_slots) for e in instance.graph.edges})
    for e, slot in assignment.items():
        out.allocation[e][slot] = 1.0
    W = _welfare(instance, assignment)
    for bidder in instance.graph.bidder_ids:
        side = RETAILER if instance.graph.is_retailer(bidder) else SUPPLIER
        mine = [(e, slot) for e, slot in assignment.items() if bidder in e]
        if not mine:
            continue
        own = sum(lam[slot] * instance.values[bidder] for _, slot in mine)
        remaining = [e for e in instance.graph.edges if bidder not in e]
        w_minus = _welfare(instance, _assign(instance, remaining))
        pay = w_minus - (W - own)
        if clamp:
            pay = max(0.0, pay)
        weights = np.array([lam[slot] * instance.values[bidder] for _, slot in mine])
        if weights.sum() <= 0.0:
            weights = np.ones(len(mine))
        weights = weights / weights.sum()
        for (e, _), wgt in zip(mine, weights):
            out.payments[(e, side)] = out.payments.get((e, side), 0.0) + pay * wgt
    return out


def rvcg_batch_revenue(batch: InstanceBatch) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (clamped, unclamped) RVCG revenue over a batch."""
    br, bs = batch.bid_matrices()
    return kernels.rvcg_revenue(batch.edge_r, batch.edge_s, br, bs, batch.ctrs)
