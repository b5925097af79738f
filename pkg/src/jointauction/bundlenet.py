"""Learned multi-slot mechanism: feature fusion, allocation and payment nets.

The allocation network maps stacked per-bundle bids to an (n+1) x (m+1)
padded logit matrix for each of two heads; a row softmax (over m+1 slots
per bundle) and a column softmax (over n+1 bundles per slot) are combined
by an element-wise min, which bounds every row and column sum of the
trimmed n x m allocation matrix by one.  The payment network outputs
per-bundle per-side fractions in [0, 1] that multiply the CTR-weighted
allocated bid, making the mechanism ex-post IR by construction.
"""

from __future__ import annotations

import json

import numpy as np

from jointauction import diffcore as dc
from jointauction.diffcore import MlpParams, Tensor
from jointauction.market import AuctionInstance, InstanceBatch, instance_to_batch
from jointauction.outcomes import RETAILER, SUPPLIER, AuctionOutcome

__all__ = [
    "BundleNet",
    "fuse_features",
    "allocate_forward",
    "payment_forward",
    "mechanism_forward",
    "forward_arrays",
    "outcome_from_instance",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


class BundleNet:
    """Network parameters for a fixed (n_bundles, n_slots) setting."""

    def __init__(self, n_bundles, n_slots, hidden=(100, 100), d_y=100, activation="tanh", seed=0):
        self.n_bundles = n_bundles
        self.n_slots = n_slots
        self.hidden = tuple(hidden)
        self.d_y = d_y
        self.activation = activation
        rng = np.random.default_rng(seed)
        n, m = n_bundles, n_slots
        pad = (n + 1) * (m + 1)
        self.alloc_mlp = MlpParams([n * m, *hidden, d_y], activation, rng)
        self.w_row = Tensor(rng.normal(0.0, np.sqrt(1.0 / d_y), (d_y, pad)), requires_grad=True)
        self.w_col = Tensor(rng.normal(0.0, np.sqrt(1.0 / d_y), (d_y, pad)), requires_grad=True)
        self.pay_mlp = MlpParams([n * 2 * m, *hidden, 2 * n], activation, rng)
        # training-time sharpening of the softmax logits / payment-fraction
        # logits; folded into the head weights at checkpoint time so saved
        # networks always carry scale 1
        self.logit_scale = 1.0
        self.pay_scale = 1.0

    def fold_scales(self) -> None:
        """Bake the current sharpening scales into the weights (idempotent at 1)."""
        if self.logit_scale != 1.0:
            self.w_row.data = self.w_row.data * self.logit_scale
            self.w_col.data = self.w_col.data * self.logit_scale
            self.logit_scale = 1.0
        if self.pay_scale != 1.0:
            self.pay_mlp.weights[-1].data = self.pay_mlp.weights[-1].data * self.pay_scale
            self.pay_mlp.biases[-1].data = self.pay_mlp.biases[-1].data * self.pay_scale
            self.pay_scale = 1.0

    def parameters(self) -> list[Tensor]:
        return self.alloc_mlp.parameters() + [self.w_row, self.w_col] + self.pay_mlp.parameters()

    def config(self) -> dict:
        return {
            "n_bundles": self.n_bundles,
            "n_slots": self.n_slots,
            "hidden": list(self.hidden),
            "d_y": self.d_y,
            "activation": self.activation,
        }


def fuse_features(edge_r, edge_s, bids_r, bids_s, lam):
    """Per-edge CPC features from pool bids.

    Returns (x_r, x_s, sb, db): per-edge CTR-scaled bids of each side
    (B, n, m), their sum, and the concatenation [X_r, X_s] of shape
    (B, n, 2m).  ``bids_*`` may be Tensors to keep bid gradients.
    """
    lam_t = dc.tensor(np.asarray(lam, dtype=float))
    br = dc.gather_cols(dc.tensor(bids_r), edge_r)
    bs = dc.gather_cols(dc.tensor(bids_s), edge_s)
    B, n = edge_r.shape
    m = len(lam_t.data)
    x_r = br.reshape(B, n, 1) * lam_t
    x_s = bs.reshape(B, n, 1) * lam_t
    sb = x_r + x_s
    db = dc.concat([x_r, x_s], axis=2)
    return x_r, x_s, sb, db


def allocate_forward(net: BundleNet, sb) -> tuple:
    """Padded doubly-stochastic-bounded matrix; returns (trimmed A, padded)."""
    n, m = net.n_bundles, net.n_slots
    B = sb.shape[0]
    y = dc.mlp_forward(net.alloc_mlp, sb.reshape(B, n * m))
    mr = dc.matmul(y, net.w_row).reshape(B, n + 1, m + 1)
    mc = dc.matmul(y, net.w_col).reshape(B, n + 1, m + 1)
    if net.logit_scale != 1.0:
        mr = mr * net.logit_scale
        mc = mc * net.logit_scale
    dr = dc.row_softmax(mr)
    col = dc.col_softmax(mc)
    a_full = dc.elementwise_min(dr, col)
    return a_full[:, :n, :m], a_full


def payment_forward(net: BundleNet, db, alloc, x_r, x_s) -> tuple:
    """IR-safe payments: fraction in [0,1] times CTR-weighted allocated bid."""
    n, m = net.n_bundles, net.n_slots
    B = db.shape[0]
    z = dc.mlp_forward(net.pay_mlp, db.reshape(B, n * 2 * m))
    if net.pay_scale != 1.0:
        z = z * net.pay_scale
    frac = dc.sigmoid(z)
    alloc_val_r = (alloc * x_r).sum(axis=2)
    alloc_val_s = (alloc * x_s).sum(axis=2)
    pay_r = frac[:, :n] * alloc_val_r
    pay_s = frac[:, n:] * alloc_val_s
    return pay_r, pay_s


def mechanism_forward(net: BundleNet, edge_r, edge_s, bids_r, bids_s, lam):
    """Full forward pass over pool bids.

    Returns a dict of Tensors: allocation ``A`` (B, n, m) and per-edge
    payments ``pay_r``/``pay_s`` (B, n).
    """
    x_r, x_s, sb, db = fuse_features(edge_r, edge_s, bids_r, bids_s, lam)
    alloc, a_full = allocate_forward(net, sb)
    pay_r, pay_s = payment_forward(net, db, alloc, x_r, x_s)
    return {"A": alloc, "A_full": a_full, "pay_r": pay_r, "pay_s": pay_s}


def forward_arrays(net: BundleNet, batch: InstanceBatch) -> dict:
    """Forward pass on a sampled batch, returning plain numpy arrays."""
    out = mechanism_forward(net, batch.edge_r, batch.edge_s, batch.vals_r, batch.vals_s, batch.ctrs)
    return {k: v.data for k, v in out.items()}


def outcome_from_instance(net: BundleNet, instance: AuctionInstance) -> AuctionOutcome:
    """Evaluate the mechanism on one concrete instance."""
    if instance.graph.n_bundles != net.n_bundles or instance.n_slots != net.n_slots:
        raise ValueError("instance shape does not match the trained setting")
    batch = instance_to_batch(instance)
    res = forward_arrays(net, batch)
    out = AuctionOutcome()
    for k, e in enumerate(instance.graph.edges):
        out.allocation[e] = res["A"][0, k].copy()
        out.payments[(e, RETAILER)] = float(res["pay_r"][0, k])
        out.payments[(e, SUPPLIER)] = float(res["pay_s"][0, k])
    return out


def save_checkpoint(path, net: BundleNet, extra: dict | None = None) -> None:
    """Versioned npz checkpoint with shape metadata; reloads bit-exactly."""
    arrays = {}
    pay_last = (net.pay_mlp.weights[-1], net.pay_mlp.biases[-1])
    for i, p in enumerate(net.parameters()):
        if p is net.w_row or p is net.w_col:
            arrays[f"p{i}"] = p.data * net.logit_scale
        elif p is pay_last[0] or p is pay_last[1]:
            arrays[f"p{i}"] = p.data * net.pay_scale
        else:
            arrays[f"p{i}"] = p.data
    meta = {"version": CHECKPOINT_VERSION, "config": net.config(), "extra": extra or {}}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[BundleNet, dict]:
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["__meta__"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg = meta["config"]
        net = BundleNet(
            cfg["n_bundles"],
            cfg["n_slots"],
            hidden=tuple(cfg["hidden"]),
            d_y=cfg["d_y"],
            activation=cfg["activation"],
        )
        for i, p in enumerate(net.parameters()):
            arr = blob[f"p{i}"]
            if arr.shape != p.data.shape:
                raise ValueError("checkpoint shape mismatch")
            p.data = arr.copy()
    return net, meta["extra"]
