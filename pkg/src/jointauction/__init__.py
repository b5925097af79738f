"""Joint-advertising auction laboratory.

Exact optimal single-slot joint auction, a revised-VCG multi-slot baseline,
and a learned multi-slot mechanism trained under bundle-level
incentive-compatibility constraints, plus a Monte-Carlo evaluation harness.
"""

from jointauction.distributions import DistributionSpec, get_distribution
from jointauction.market import AuctionInstance, MarketGraph

__all__ = [
    "AuctionInstance",
    "DistributionSpec",
    "MarketGraph",
    "get_distribution",
]

__version__ = "0.1.0"
