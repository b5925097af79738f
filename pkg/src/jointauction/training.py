"""Bundle-regret machinery and the augmented-Lagrangian training loop.

One independent misreport variable exists per (sample, edge, side), which
realizes the per-bundle max in the empirical bundle regret exactly: the
retailer-side variable for edge e replaces that retailer's bid everywhere
(it may sit on several edges), but the utility being climbed is only the
bundle utility of edge e.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict

import numpy as np

from jointauction import diffcore as dc
from jointauction import distributions as dist_mod
from jointauction.bundlenet import BundleNet, forward_arrays, load_checkpoint, mechanism_forward
from jointauction.diffcore import Tensor
from jointauction.distributions import DistributionSpec
from jointauction.market import InstanceBatch, sample_batch

__all__ = [
    "TrainConfig",
    "TrainState",
    "bundle_regret",
    "bidder_regret",
    "misreport_ascent",
    "lagrangian_loss",
    "train",
    "grid_search_regrets",
    "ascent_regrets",
    "net_forward_fn",
    "exact_forward_fn",
]


@dataclass
class TrainConfig:
    """Desk-scale defaults; every paper-silent hyperparameter is exposed."""

    n_bundles: int = 2
    n_slots: int = 1
    dist: str = "u01"
    ctrs: tuple = (1.0,)
    reserve: float = 0.0
    train_samples: int = 20_000
    batch_size: int = 128
    passes: int = 30
    inner_steps: int = 25  # misreport ascent steps per minibatch
    misreport_rate: float = 0.05
    warm_start: bool = True  # keep per-sample misreports across passes
    fresh_restarts: int = 1  # extra fresh-start ascent candidates per minibatch
    tail_weight: float = 0.0  # per-sample squared-gain penalty, scaled by rho
    pay_only_pass: int = 0  # from this pass on, damp the allocation nets (0 disables)
    alloc_grad_scale: float = 0.0  # allocation-grad factor during the damped phase
    temp_final: float = 1.0  # final allocation-logit scale (1 disables sharpening)
    temp_ramp: int = 1  # passes over which the sharpening scales ramp up
    pay_temp_final: float = 1.0  # final payment-logit scale (1 disables)
    grid_attack: int = 0  # grid points for an exhaustive misreport candidate (0 disables)
    resume_path: str = ""  # checkpoint whose weights seed the network (fresh init if empty)
    resume_mu: float = 0.0  # initial Lagrange multiplier value (used with resume_path)
    mu_freeze_pass: int = 0  # hold mu and rho fixed from this pass on (0 disables)
    swa_start_pass: int = 0  # average pass-end weights from this pass on (0 disables)
    lr: float = 1e-3
    rho0: float = 1.0
    rho_increment: float = 1.0
    rho_every_passes: int = 2
    mult_update_period: int = 100
    lr_decay_pass: int = 0  # 0 disables the one-shot learning-rate decay
    lr_decay_factor: float = 0.1
    hidden: tuple = (100, 100)
    d_y: int = 100
    activation: str = "tanh"
    seed: int = 0
    log_every: int = 50

    def distribution(self) -> DistributionSpec:
        return dist_mod.get_distribution(self.dist)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ctrs"] = list(self.ctrs)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainState:
    net: BundleNet
    mu: np.ndarray
    rho: float
    step: int = 0
    history: list = field(default_factory=list)
    swa_params: list | None = None  # running average of pass-end weights
    swa_count: int = 0

    def swa_network(self) -> BundleNet:
        """Copy of the network with the averaged weights (smoother iterate).

        Averaging late pass-end snapshots trades a small amount of revenue
        noise for a measurably lower evaluation regret.
        """
        if not self.swa_params:
            raise ValueError("no averaged weights: set swa_start_pass in the config")
        cfg = self.net.config()
        avg = BundleNet(
            cfg["n_bundles"],
            cfg["n_slots"],
            hidden=tuple(cfg["hidden"]),
            d_y=cfg["d_y"],
            activation=cfg["activation"],
        )
        for p, a in zip(avg.parameters(), self.swa_params):
            p.data = a.copy()
        avg.logit_scale = self.net.logit_scale
        avg.pay_scale = self.net.pay_scale
        return avg


class _Workspace:
    """Constant masks for the stacked per-(edge, side) misreport batch.

    Variable q in [0, 2n) covers edge q % n, retailer side for q < n and
    supplier side otherwise.  Stacked row q*C + b holds sample b with
    variable q's misreport substituted into the bid profile.
    """

    def __init__(self, batch: InstanceBatch):
        er, es = batch.edge_r, batch.edge_s
        C, n = er.shape
        self.C, self.n = C, n
        self.lam = batch.ctrs
        self.er, self.es = er, es
        self.vals_r, self.vals_s = batch.vals_r, batch.vals_s
        self.br_true, self.bs_true = batch.bid_matrices()
        reps = (2 * n, 1)
        self.er_t = np.tile(er, reps)
        self.es_t = np.tile(es, reps)
        self.vals_r_t = np.tile(batch.vals_r, reps)
        self.vals_s_t = np.tile(batch.vals_s, reps)
        self.br_true_t = np.tile(self.br_true, reps)
        self.bs_true_t = np.tile(self.bs_true, reps)
        rows = np.arange(C)
        pool_r = batch.vals_r.shape[1]
        pool_s = batch.vals_s.shape[1]
        self.mask_r = np.zeros((2 * n * C, pool_r))
        self.mask_s = np.zeros((2 * n * C, pool_s))
        self.sel_r = np.zeros((2 * n * C, n))
        self.sel_s = np.zeros((2 * n * C, n))
        for q in range(n):
            blk = slice(q * C, (q + 1) * C)
            self.mask_r[blk][rows, er[:, q]] = 1.0
            self.sel_r[blk, q] = 1.0
        for q in range(n, 2 * n):
            blk = slice(q * C, (q + 1) * C)
            self.mask_s[blk][rows, es[:, q - n]] = 1.0
            self.sel_s[blk, q - n] = 1.0

    def misreport_utilities(self, net: BundleNet, mis: Tensor) -> Tensor:
        """Bundle utility of each variable's target (edge, side), shape (2nC,)."""
        prof_r = dc.tensor(self.vals_r_t) * (1.0 - self.mask_r) + mis * self.mask_r
        prof_s = dc.tensor(self.vals_s_t) * (1.0 - self.mask_s) + mis * self.mask_s
        out = mechanism_forward(net, self.er_t, self.es_t, prof_r, prof_s, self.lam)
        aw = (out["A"] * self.lam).sum(axis=2)
        u_r = dc.tensor(self.br_true_t) * aw - out["pay_r"]
        u_s = dc.tensor(self.bs_true_t) * aw - out["pay_s"]
        return (dc.tensor(self.sel_r) * u_r + dc.tensor(self.sel_s) * u_s).sum(axis=1)

    def truthful_terms(self, net: BundleNet):
        """Truthful forward: (revenue term Tensor, u_true_r, u_true_s)."""
        out = mechanism_forward(net, self.er, self.es, self.vals_r, self.vals_s, self.lam)
        aw = (out["A"] * self.lam).sum(axis=2)
        u_r = dc.tensor(self.br_true) * aw - out["pay_r"]
        u_s = dc.tensor(self.bs_true) * aw - out["pay_s"]
        revenue = (out["pay_r"] + out["pay_s"]).sum(axis=1).mean()
        return revenue, u_r, u_s


def _param_grad(net: BundleNet, enabled: bool) -> None:
    for p in net.parameters():
        p.requires_grad = enabled


def init_misreports(batch: InstanceBatch, spec: DistributionSpec, rng) -> np.ndarray:
    """Fresh uniform draw in the support per (edge, side, sample)."""
    C, n = batch.edge_r.shape
    lo, hi = spec.support_lo, spec.support_hi
    return lo + (hi - lo) * rng.random((2 * n * C, 1))


def misreport_ascent(
    net: BundleNet,
    ws: _Workspace,
    mis: np.ndarray,
    steps: int,
    rate: float,
    spec: DistributionSpec,
) -> np.ndarray:
    """Gradient ascent on each variable's bundle utility, clamped to support."""
    lo, hi = spec.support_lo, spec.support_hi
    _param_grad(net, False)
    try:
        for _ in range(steps):
            mis_t = Tensor(mis, requires_grad=True)
            u = ws.misreport_utilities(net, mis_t).sum()
            dc.backward(u)
            mis = np.clip(mis + rate * mis_t.grad, lo, hi)
    finally:
        _param_grad(net, True)
    return mis


def _grid_attack(net: BundleNet, ws: _Workspace, G: int, spec: DistributionSpec) -> np.ndarray:
    """Best misreport per (edge, side, sample) over a G-point value grid.

    Pure forward sweeps (no gradients); one stacked forward per variable.
    Returns a (2nC, 1) misreport array in the train-loop stacking order.
    """
    grid = np.linspace(spec.support_lo, spec.support_hi, G)
    n, C = ws.n, ws.C
    lam = ws.lam
    rows = np.arange(C)
    out = np.empty((2 * n, C))
    for q in range(2 * n):
        e = q % n
        retailer = q < n
        vr = np.tile(ws.vals_r, (G, 1))
        vs = np.tile(ws.vals_s, (G, 1))
        pool_col = ws.er[:, e] if retailer else ws.es[:, e]
        target = vr if retailer else vs
        for g_idx, g in enumerate(grid):
            target[g_idx * C + rows, pool_col] = g
        er_t = np.tile(ws.er, (G, 1))
        es_t = np.tile(ws.es, (G, 1))
        res = mechanism_forward(net, er_t, es_t, vr, vs, lam)
        aw = (res["A"].data * lam).sum(axis=2)[:, e]
        pay = (res["pay_r"] if retailer else res["pay_s"]).data[:, e]
        b_true = (ws.br_true if retailer else ws.bs_true)[:, e]
        u = (np.tile(b_true, G) * aw - pay).reshape(G, C)
        out[q] = grid[u.argmax(axis=0)]
    return out.reshape(2 * n * C, 1)


def _regret_terms(net: BundleNet, ws: _Workspace, mis: np.ndarray, with_tail: bool = False):
    """Graph pieces shared by the loss and the regret estimate.

    ``with_tail`` additionally returns the mean per-sample squared gain,
    which up-weights the largest individual IC violations.
    """
    revenue, u_true_r, u_true_s = ws.truthful_terms(net)
    u_mis = ws.misreport_utilities(net, dc.tensor(mis))
    n, C = ws.n, ws.C
    u_mis_r = u_mis[: n * C].reshape(n, C)
    u_mis_s = u_mis[n * C :].reshape(n, C)
    gain_r = dc.relu(u_mis_r - dc.transpose(u_true_r))
    gain_s = dc.relu(u_mis_s - dc.transpose(u_true_s))
    rgt = (gain_r + gain_s).mean(axis=1)  # (n,)
    if with_tail:
        tail = (gain_r.square() + gain_s.square()).mean(axis=1).sum()
        return revenue, rgt, tail
    return revenue, rgt


def bundle_regret(net: BundleNet, batch: InstanceBatch, mis: np.ndarray) -> np.ndarray:
    """Per-edge empirical bundle regret at the supplied misreports."""
    ws = _Workspace(batch)
    _, rgt = _regret_terms(net, ws, mis)
    return rgt.data.copy()


def lagrangian_loss(
    net: BundleNet, batch: InstanceBatch, mu: np.ndarray, rho: float, mis: np.ndarray
) -> Tensor:
    """-(mean revenue) + sum_e mu_e rgt_e + (rho/2) sum_e rgt_e^2."""
    ws = _Workspace(batch)
    revenue, rgt = _regret_terms(net, ws, mis)
    return -revenue + (dc.tensor(mu) * rgt).sum() + (rho / 2.0) * rgt.square().sum()


def train(config: TrainConfig, on_epoch=None) -> TrainState:
    """Full training loop; deterministic given the config seed.

    ``on_epoch(state, pass_index)`` runs after every pass and may return
    True to stop early (used for budgeted acceptance runs).
    """
    spec = config.distribution()
    rng = np.random.default_rng(config.seed)
    net = BundleNet(
        config.n_bundles,
        config.n_slots,
        hidden=config.hidden,
        d_y=config.d_y,
        activation=config.activation,
        seed=int(rng.integers(2**31)),
    )
    if config.resume_path:
        prev, _ = load_checkpoint(config.resume_path)
        for p, q in zip(net.parameters(), prev.parameters()):
            if p.data.shape != q.data.shape:
                raise ValueError("resume checkpoint shape does not match the config")
            p.data = q.data.copy()
    data = sample_batch(
        config.n_bundles, spec, config.ctrs, config.reserve, config.train_samples, rng
    )
    opt = dc.Adam(net.parameters(), lr=config.lr)
    n = config.n_bundles
    state = TrainState(net=net, mu=np.full(n, config.resume_mu), rho=config.rho0)
    C = config.batch_size
    steps_per_pass = config.train_samples // C
    lo, hi = spec.support_lo, spec.support_hi
    # persistent per-(variable, sample) misreports; ascent refines them
    # across passes instead of restarting from scratch each minibatch
    mis_buf = lo + (hi - lo) * rng.random((2 * n, config.train_samples))
    for pass_idx in range(config.passes):
        sched_pass = pass_idx
        if config.mu_freeze_pass and pass_idx >= config.mu_freeze_pass:
            sched_pass = config.mu_freeze_pass
        state.rho = config.rho0 + config.rho_increment * (sched_pass // config.rho_every_passes)
        if config.temp_final != 1.0 or config.pay_temp_final != 1.0:
            frac = min(1.0, pass_idx / max(1, config.temp_ramp))
            net.logit_scale = 1.0 + (config.temp_final - 1.0) * frac
            net.pay_scale = 1.0 + (config.pay_temp_final - 1.0) * frac
        if config.lr_decay_pass and pass_idx == config.lr_decay_pass:
            opt.lr *= config.lr_decay_factor
        order = rng.permutation(config.train_samples)
        for j in range(steps_per_pass):
            take = order[j * C : (j + 1) * C]
            mb = InstanceBatch(
                data.edge_r[take],
                data.edge_s[take],
                data.vals_r[take],
                data.vals_s[take],
                data.ctrs,
                data.reserve,
            )
            ws = _Workspace(mb)
            starts = []
            if config.warm_start:
                starts.append(mis_buf[:, take].reshape(2 * n * C, 1))
            for _ in range(max(config.fresh_restarts, 0 if starts else 1)):
                starts.append(init_misreports(mb, spec, rng))
            mis = best_u = None
            ascended = [
                misreport_ascent(net, ws, s, config.inner_steps, config.misreport_rate, spec)
                for s in starts
            ]
            if config.grid_attack:
                ascended.append(_grid_attack(net, ws, config.grid_attack, spec))
            if len(ascended) == 1:
                mis = ascended[0]
            else:
                for cand in ascended:
                    u = ws.misreport_utilities(net, dc.tensor(cand)).data.reshape(-1, 1)
                    if mis is None:
                        mis, best_u = cand, u
                    else:
                        better = u > best_u
                        mis = np.where(better, cand, mis)
                        best_u = np.maximum(u, best_u)
            if config.warm_start:
                mis_buf[:, take] = mis.reshape(2 * n, C)
            revenue, rgt, tail = _regret_terms(net, ws, mis, with_tail=True)
            loss = (
                -revenue
                + (dc.tensor(state.mu) * rgt).sum()
                + (state.rho / 2.0) * rgt.square().sum()
            )
            if config.tail_weight:
                loss = loss + (config.tail_weight * state.rho / 2.0) * tail
            opt.zero_grad()
            dc.backward(loss)
            if config.pay_only_pass and pass_idx >= config.pay_only_pass:
                # payment-calibration phase: allocation nets (nearly) fixed
                for p in net.alloc_mlp.parameters() + [net.w_row, net.w_col]:
                    if p.grad is not None:
                        p.grad = (
                            p.grad * config.alloc_grad_scale
                            if config.alloc_grad_scale
                            else None
                        )
            opt.step()
            state.step += 1
            frozen = config.mu_freeze_pass and pass_idx >= config.mu_freeze_pass
            if state.step % config.mult_update_period == 0 and not frozen:
                state.mu = state.mu + state.rho * rgt.data
            if state.step % config.log_every == 0 or j == steps_per_pass - 1:
                state.history.append(
                    {
                        "step": state.step,
                        "pass": pass_idx,
                        "revenue": float(revenue.data),
                        "mean_regret": float(rgt.data.mean()),
                        "max_regret": float(rgt.data.max()),
                        "loss": float(loss.data),
                        "rho": state.rho,
                    }
                )
        if config.swa_start_pass and pass_idx >= config.swa_start_pass:
            state.swa_count += 1
            if state.swa_params is None:
                state.swa_params = [p.data.copy() for p in net.parameters()]
            else:
                for a, p in zip(state.swa_params, net.parameters()):
                    a += (p.data - a) / state.swa_count
        if on_epoch is not None and on_epoch(state, pass_idx):
            break
    return state


def write_history_csv(history: list, path) -> None:
    if not history:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(history[0]))
        writer.writeheader()
        writer.writerows(history)


# ---------------------------------------------------------------------------
# Mechanism-agnostic regret estimation (grid search and ascent).
# ---------------------------------------------------------------------------


def net_forward_fn(net: BundleNet):
    """Adapter: batch arrays -> (ctr-weighted allocation, pay_r, pay_s)."""

    def fn(batch: InstanceBatch):
        out = forward_arrays(net, batch)
        aw = (out["A"] * batch.ctrs).sum(axis=2)
        return aw, out["pay_r"], out["pay_s"]

    return fn


def exact_forward_fn(dist: DistributionSpec):
    """The exact single-slot mechanism in the same batch interface."""
    from jointauction.exact import exact_batch

    def fn(batch: InstanceBatch):
        winner, pay_r, pay_s = exact_batch(batch, dist)
        L, n = batch.edge_r.shape
        aw = np.zeros((L, n))
        won = winner >= 0
        aw[np.arange(L)[won], winner[won]] = batch.ctrs[0]
        pr = np.zeros((L, n))
        ps = np.zeros((L, n))
        pr[np.arange(L)[won], winner[won]] = pay_r[won]
        ps[np.arange(L)[won], winner[won]] = pay_s[won]
        return aw, pr, ps

    return fn


def _misreported_batch(batch: InstanceBatch, side: str, pool_idx: int, value) -> InstanceBatch:
    vals_r, vals_s = batch.vals_r, batch.vals_s
    if side == "retailer":
        vals_r = vals_r.copy()
        vals_r[:, pool_idx] = value
    else:
        vals_s = vals_s.copy()
        vals_s[:, pool_idx] = value
    return InstanceBatch(batch.edge_r, batch.edge_s, vals_r, vals_s, batch.ctrs, batch.reserve)


def _edge_utils(fn, batch: InstanceBatch, br_true, bs_true):
    aw, pr, ps = fn(batch)
    return br_true * aw - pr, bs_true * aw - ps


def grid_search_regrets(fn, batch: InstanceBatch, grid: np.ndarray) -> dict:
    """Grid misreport search per value-pool member on each side.

    Returns per-edge bundle regrets and per-bidder regrets (both means over
    the batch), plus their sums.  Replacing pool member p's value is the
    same operation for the bundle-level and bidder-level searches, so one
    sweep serves both; maxima are taken over the common grid (the truthful
    report is also always included), which keeps the bundle-vs-bidder
    inequality exact.
    """
    L, n = batch.edge_r.shape
    br_true, bs_true = batch.bid_matrices()
    u_true_r, u_true_s = _edge_utils(fn, batch, br_true, bs_true)
    pool_r = batch.vals_r.shape[1]
    pool_s = batch.vals_s.shape[1]
    # bundle-level best misreport utility per (edge, side); start truthful
    best_edge_r = u_true_r.copy()
    best_edge_s = u_true_s.copy()
    # bidder-level best total utility per (side, pool); start truthful
    tot_true_r = np.zeros((L, pool_r))
    tot_true_s = np.zeros((L, pool_s))
    for p in range(pool_r):
        tot_true_r[:, p] = np.where(batch.edge_r == p, u_true_r, 0.0).sum(axis=1)
    for p in range(pool_s):
        tot_true_s[:, p] = np.where(batch.edge_s == p, u_true_s, 0.0).sum(axis=1)
    best_tot_r = tot_true_r.copy()
    best_tot_s = tot_true_s.copy()
    for p in range(pool_r):
        mine = batch.edge_r == p
        for v in grid:
            u_r, _ = _edge_utils(fn, _misreported_batch(batch, "retailer", p, v), br_true, bs_true)
            cand = np.where(mine, u_r, -np.inf)
            best_edge_r = np.where(mine, np.maximum(best_edge_r, cand), best_edge_r)
            best_tot_r[:, p] = np.maximum(best_tot_r[:, p], np.where(mine, u_r, 0.0).sum(axis=1))
    for p in range(pool_s):
        mine = batch.edge_s == p
        for v in grid:
            _, u_s = _edge_utils(fn, _misreported_batch(batch, "supplier", p, v), br_true, bs_true)
            best_edge_s = np.where(mine, np.maximum(best_edge_s, np.where(mine, u_s, -np.inf)), best_edge_s)
            best_tot_s[:, p] = np.maximum(best_tot_s[:, p], np.where(mine, u_s, 0.0).sum(axis=1))
    per_edge = (best_edge_r - u_true_r).mean(axis=0) + (best_edge_s - u_true_s).mean(axis=0)
    gain_bidder_r = best_tot_r - tot_true_r
    gain_bidder_s = best_tot_s - tot_true_s
    present_r = np.zeros((L, pool_r), dtype=bool)
    present_s = np.zeros((L, pool_s), dtype=bool)
    for p in range(pool_r):
        present_r[:, p] = (batch.edge_r == p).any(axis=1)
    for p in range(pool_s):
        present_s[:, p] = (batch.edge_s == p).any(axis=1)
    sum_bidder = gain_bidder_r.sum(axis=1).mean() + gain_bidder_s.sum(axis=1).mean()
    mean_bidders = (present_r.sum() + present_s.sum()) / L
    return {
        "per_edge": per_edge,
        "sum_edges": float(per_edge.sum()),
        "sum_bidders": float(sum_bidder),
        "mean_per_bidder_2n": float(sum_bidder / (2 * n)),
        "mean_per_bidder_present": float(sum_bidder / mean_bidders),
    }


def ascent_regrets(
    net: BundleNet,
    batch: InstanceBatch,
    spec: DistributionSpec,
    steps: int = 200,
    rate: float = 0.05,
    restarts: int = 10,
    rng=None,
) -> np.ndarray:
    """Per-edge bundle regret via multi-restart ascent (max over restarts)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    ws = _Workspace(batch)
    C, n = batch.edge_r.shape
    _, u_true_r, u_true_s = ws.truthful_terms(net)
    best_r = u_true_r.data.T.copy()  # (n, C)
    best_s = u_true_s.data.T.copy()
    for _ in range(restarts):
        mis = init_misreports(batch, spec, rng)
        mis = misreport_ascent(net, ws, mis, steps, rate, spec)
        u = ws.misreport_utilities(net, dc.tensor(mis)).data
        best_r = np.maximum(best_r, u[: n * C].reshape(n, C))
        best_s = np.maximum(best_s, u[n * C :].reshape(n, C))
    return (best_r - u_true_r.data.T).mean(axis=1) + (best_s - u_true_s.data.T).mean(axis=1)


def bidder_regret(net: BundleNet, batch: InstanceBatch, grid: np.ndarray) -> dict:
    """Whole-utility per-bidder regret by grid search (evaluation only)."""
    return grid_search_regrets(net_forward_fn(net), batch, grid)
