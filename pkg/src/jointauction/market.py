"""Bipartite market model: retailers, suppliers and the bundles linking them.

Bidder ids are dense integers with retailers indexed before suppliers, so a
graph with ``nr`` retailers assigns ids ``0..nr-1`` to retailers and
``nr..nr+ns-1`` to suppliers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from jointauction import distributions as dist_mod
from jointauction.distributions import DistributionSpec

__all__ = [
    "MarketGraph",
    "AuctionInstance",
    "InstanceBatch",
    "neighbors",
    "bundles_excluding",
    "sample_graph",
    "sample_instance",
    "sample_edge_arrays",
    "sample_batch",
    "instance_to_batch",
    "fixture_shared_supplier",
    "fixture_disjoint_pairs",
    "graph_to_dict",
    "graph_from_dict",
    "instance_to_dict",
    "instance_from_dict",
]


@dataclass(frozen=True)
class MarketGraph:
    """Bipartite relation of retailers, suppliers and bundles (edges)."""

    retailer_ids: tuple[int, ...]
    supplier_ids: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        rset, sset = set(self.retailer_ids), set(self.supplier_ids)
        if rset & sset:
            raise ValueError("retailer and supplier id spaces must be disjoint")
        if len(set(self.edges)) != len(self.edges):
            raise ValueError("duplicate bundle")
        touched = set()
        for r, s in self.edges:
            if r not in rset or s not in sset:
                raise ValueError(f"edge ({r}, {s}) references unknown bidder")
            touched.add(r)
            touched.add(s)
        if touched != rset | sset:
            raise ValueError("every bidder must appear in at least one bundle")

    @property
    def n_bundles(self) -> int:
        return len(self.edges)

    @property
    def bidder_ids(self) -> tuple[int, ...]:
        return self.retailer_ids + self.supplier_ids

    def is_retailer(self, bidder_id: int) -> bool:
        return bidder_id in set(self.retailer_ids)


@dataclass(frozen=True)
class AuctionInstance:
    """A market graph together with a bid profile, CTR vector and reserve."""

    graph: MarketGraph
    values: dict[int, float]
    ctrs: tuple[float, ...]
    reserve: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.ctrs, dtype=float)
        if lam.size == 0 or np.any(lam < 0.0) or np.any(lam > 1.0):
            raise ValueError("CTRs must lie in [0, 1]")
        if np.any(np.diff(lam) > 1e-12):
            raise ValueError("CTRs must be nonincreasing")
        missing = set(self.graph.bidder_ids) - set(self.values)
        if missing:
            raise ValueError(f"missing values for bidders {sorted(missing)}")

    @property
    def n_slots(self) -> int:
        return len(self.ctrs)

    def replace_value(self, bidder_id: int, value: float) -> "AuctionInstance":
        vals = dict(self.values)
        vals[bidder_id] = value
        return AuctionInstance(self.graph, vals, self.ctrs, self.reserve)


@dataclass
class InstanceBatch:
    """Array form of many sampled instances sharing (n, m, reserve).

    Edges index into per-side value pools of size ``n``; pool members not
    referenced by any edge are inert.
    """

    edge_r: np.ndarray  # (L, n) retailer pool index per edge
    edge_s: np.ndarray  # (L, n) supplier pool index per edge
    vals_r: np.ndarray  # (L, n)
    vals_s: np.ndarray  # (L, n)
    ctrs: np.ndarray  # (m,)
    reserve: float = 0.0

    @property
    def size(self) -> int:
        return self.edge_r.shape[0]

    @property
    def n_bundles(self) -> int:
        return self.edge_r.shape[1]

    @property
    def n_slots(self) -> int:
        return self.ctrs.shape[0]

    def bid_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-edge retailer and supplier bids, each of shape (L, n)."""
        br = np.take_along_axis(self.vals_r, self.edge_r, axis=1)
        bs = np.take_along_axis(self.vals_s, self.edge_s, axis=1)
        return br, bs


def neighbors(graph: MarketGraph, bidder_id: int) -> tuple[int, ...]:
    """Adjacent bidders on the other side, ascending id."""
    if bidder_id in set(graph.retailer_ids):
        out = {s for r, s in graph.edges if r == bidder_id}
    elif bidder_id in set(graph.supplier_ids):
        out = {r for r, s in graph.edges if s == bidder_id}
    else:
        raise KeyError(f"unknown bidder {bidder_id}")
    return tuple(sorted(out))


def bundles_excluding(graph: MarketGraph, bidder_id: int) -> tuple[tuple[int, int], ...]:
    """All bundles not incident to the given bidder."""
    if bidder_id not in set(graph.bidder_ids):
        raise KeyError(f"unknown bidder {bidder_id}")
    return tuple(e for e in graph.edges if bidder_id not in e)


def _graph_from_pool_edges(edge_r: np.ndarray, edge_s: np.ndarray) -> MarketGraph:
    """Build a dense-id graph from pool-indexed edges, dropping isolated members."""
    used_r = sorted(set(int(i) for i in edge_r))
    used_s = sorted(set(int(j) for j in edge_s))
    rmap = {p: k for k, p in enumerate(used_r)}
    smap = {p: len(used_r) + k for k, p in enumerate(used_s)}
    edges = tuple((rmap[int(i)], smap[int(j)]) for i, j in zip(edge_r, edge_s))
    return MarketGraph(
        retailer_ids=tuple(range(len(used_r))),
        supplier_ids=tuple(range(len(used_r), len(used_r) + len(used_s))),
        edges=edges,
    )


def sample_edge_arrays(n_bundles: int, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample random graphs as pool-indexed edge arrays, shape (count, n).

    Each sample draws ``n`` distinct edges uniformly from the n x n product
    of per-side pools; edges are listed in ascending flat order.
    """
    n = n_bundles
    keys = rng.random((count, n * n))
    flat = np.argpartition(keys, n - 1, axis=1)[:, :n]
    flat.sort(axis=1)
    return flat // n, flat % n


def sample_graph(n_bundles: int, rng_seed: int) -> MarketGraph:
    """One random graph with exactly ``n_bundles`` bundles."""
    if n_bundles < 1:
        raise ValueError("need at least one bundle")
    rng = np.random.default_rng(rng_seed)
    edge_r, edge_s = sample_edge_arrays(n_bundles, 1, rng)
    return _graph_from_pool_edges(edge_r[0], edge_s[0])


def sample_instance(
    graph: MarketGraph,
    dist: DistributionSpec,
    ctrs,
    reserve: float,
    rng_seed: int,
) -> AuctionInstance:
    """Independent values for every bidder in the graph."""
    rng = np.random.default_rng(rng_seed)
    draws = dist_mod.sample_with(dist, rng, len(graph.bidder_ids))
    values = {b: float(v) for b, v in zip(graph.bidder_ids, draws)}
    return AuctionInstance(graph, values, tuple(float(c) for c in ctrs), reserve)


def sample_batch(
    n_bundles: int,
    dist: DistributionSpec,
    ctrs,
    reserve: float,
    count: int,
    rng: np.random.Generator | int,
) -> InstanceBatch:
    """Sample ``count`` instances (fresh random graph each) in array form."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    edge_r, edge_s = sample_edge_arrays(n_bundles, count, rng)
    vals_r = dist_mod.sample_with(dist, rng, (count, n_bundles))
    vals_s = dist_mod.sample_with(dist, rng, (count, n_bundles))
    return InstanceBatch(edge_r, edge_s, vals_r, vals_s, np.asarray(ctrs, dtype=float), reserve)


def instance_to_batch(instance: AuctionInstance) -> InstanceBatch:
    """Single instance as a size-1 batch (pools sized by graph membership)."""
    g = instance.graph
    nr = len(g.retailer_ids)
    n = g.n_bundles
    edge_r = np.zeros((1, n), dtype=np.int64)
    edge_s = np.zeros((1, n), dtype=np.int64)
    vals_r = np.zeros((1, n))
    vals_s = np.zeros((1, n))
    for k, (r, s) in enumerate(g.edges):
        edge_r[0, k] = r
        edge_s[0, k] = s - nr
    for k, r in enumerate(g.retailer_ids):
        vals_r[0, k] = instance.values[r]
    for k, s in enumerate(g.supplier_ids):
        vals_s[0, k] = instance.values[s]
    return InstanceBatch(
        edge_r, edge_s, vals_r, vals_s, np.asarray(instance.ctrs, dtype=float), instance.reserve
    )


def fixture_shared_supplier() -> MarketGraph:
    """Two retailers sharing one supplier: e1=(r0,s), e2=(r1,s)."""
    return MarketGraph((0, 1), (2,), ((0, 2), (1, 2)))


def fixture_disjoint_pairs() -> MarketGraph:
    """Two disjoint bundles: e1=(r0,s0), e2=(r1,s1)."""
    return MarketGraph((0, 1), (2, 3), ((0, 2), (1, 3)))


def graph_to_dict(graph: MarketGraph) -> dict:
    return {
        "retailers": list(graph.retailer_ids),
        "suppliers": list(graph.supplier_ids),
        "edges": [list(e) for e in graph.edges],
    }


def graph_from_dict(d: dict) -> MarketGraph:
    return MarketGraph(
        tuple(d["retailers"]),
        tuple(d["suppliers"]),
        tuple((int(r), int(s)) for r, s in d["edges"]),
    )


def instance_to_dict(instance: AuctionInstance) -> dict:
    d = graph_to_dict(instance.graph)
    d["values"] = {str(k): v for k, v in sorted(instance.values.items())}
    d["ctrs"] = list(instance.ctrs)
    d["v0"] = instance.reserve
    return d


def instance_from_dict(d: dict) -> AuctionInstance:
    return AuctionInstance(
        graph_from_dict(d),
        {int(k): float(v) for k, v in d["values"].items()},
        tuple(float(c) for c in d["ctrs"]),
        float(d.get("v0", 0.0)),
    )


def instance_to_json(instance: AuctionInstance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2, sort_keys=True)


def instance_from_json(text: str) -> AuctionInstance:
    return instance_from_dict(json.loads(text))
