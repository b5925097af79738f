"""Auction outcome container shared by every mechanism."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from jointauction.market import AuctionInstance

__all__ = ["AuctionOutcome", "RETAILER", "SUPPLIER"]

RETAILER = "retailer"
SUPPLIER = "supplier"


@dataclass
class AuctionOutcome:
    """Per-bundle slot allocation plus per-bundle per-side payments.

    ``allocation`` maps an edge to a length-m slot-probability vector
    (deterministic mechanisms use 0/1 entries); ``payments`` maps
    ``(edge, side)`` to money, with ``side`` in {"retailer", "supplier"}.
    """

    allocation: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    payments: dict[tuple[tuple[int, int], str], float] = field(default_factory=dict)

    def edge_allocation(self, edge) -> np.ndarray:
        return self.allocation[tuple(edge)]

    def payment(self, edge, side: str) -> float:
        return self.payments.get((tuple(edge), side), 0.0)

    def total_revenue(self) -> float:
        return float(sum(self.payments.values()))

    def bidder_allocation(self, instance: AuctionInstance, bidder_id: int) -> np.ndarray:
        """Summed slot allocation over the bidder's bundles (x_i)."""
        m = instance.n_slots
        out = np.zeros(m)
        for e in instance.graph.edges:
            if bidder_id in e:
                out += self.allocation.get(e, np.zeros(m))
        return out

    def bidder_payment(self, instance: AuctionInstance, bidder_id: int) -> float:
        side = RETAILER if instance.graph.is_retailer(bidder_id) else SUPPLIER
        total = 0.0
        for e in instance.graph.edges:
            if bidder_id in e:
                total += self.payment(e, side)
        return total

    def bidder_utility(self, instance: AuctionInstance, bidder_id: int) -> float:
        """Quasilinear utility v_i * (x_i . lambda) - p_i at the reported profile."""
        lam = np.asarray(instance.ctrs)
        x = self.bidder_allocation(instance, bidder_id)
        return float(instance.values[bidder_id] * (x @ lam) - self.bidder_payment(instance, bidder_id))

    def validate(self, instance: AuctionInstance, tol: float = 1e-9) -> None:
        """Check feasibility, nonnegative payments, and per-side IR."""
        lam = np.asarray(instance.ctrs)
        m = instance.n_slots
        per_slot = np.zeros(m)
        for e, x in self.allocation.items():
            x = np.asarray(x)
            if x.shape != (m,) or np.any(x < -tol) or x.sum() > 1.0 + tol:
                raise ValueError(f"bad allocation vector for edge {e}")
            per_slot += x
        if np.any(per_slot > 1.0 + tol):
            raise ValueError("slot allocated more than once")
        for (e, side), p in self.payments.items():
            if p < -tol:
                raise ValueError(f"negative payment for {e}/{side}")
            bidder = e[0] if side == RETAILER else e[1]
            x = np.asarray(self.allocation.get(e, np.zeros(m)))
            cap = instance.values[bidder] * float(x @ lam)
            if p > cap + tol:
                raise ValueError(f"IR violation for {e}/{side}: pays {p} > {cap}")

    def to_rows(self) -> list[dict]:
        """Structured-text rows: one per edge with slot vector and payments."""
        rows = []
        for e in sorted(self.allocation):
            rows.append(
                {
                    "edge": list(e),
                    "slots": [float(v) for v in self.allocation[e]],
                    "pay_retailer": self.payment(e, RETAILER),
                    "pay_supplier": self.payment(e, SUPPLIER),
                }
            )
        return rows
