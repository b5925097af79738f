"""Quick property suites runnable without pytest (``jointauction selftest``)."""

from __future__ import annotations

import numpy as np

from jointauction import distributions as dist_mod
from jointauction import diffcore as dc
from jointauction.bundlenet import BundleNet, forward_arrays
from jointauction.exact import brute_force_virtual_surplus, optimal_run
from jointauction.market import sample_batch, sample_graph, sample_instance
from jointauction.vcg import vcg_price


def _check_distributions(rng) -> list[str]:
    errs = []
    for name in dist_mod.CATALOG:
        spec = dist_mod.get_distribution(name)
        v = np.linspace(spec.support_lo + 1e-6, spec.support_hi - 1e-6, 257)
        cdf = dist_mod.cdf(spec, v)
        if not np.all(np.diff(cdf) >= -1e-12):
            errs.append(f"{name}: cdf not monotone")
        cv = dist_mod.virtual_value(spec, v)
        if not np.all(np.diff(cv) >= -1e-8):
            errs.append(f"{name}: virtual value not monotone (irregular?)")
        mid = 0.5 * (spec.support_lo + spec.support_hi)
        c_mid = float(dist_mod.virtual_value(spec, mid))
        back = dist_mod.inverse_virtual_value(spec, c_mid)
        if abs(back - mid) > 1e-7:
            errs.append(f"{name}: inverse virtual value round-trip off by {abs(back - mid):.2e}")
    return errs


def _check_exact(rng) -> list[str]:
    errs = []
    spec = dist_mod.get_distribution("u01")
    for k in range(50):
        g = sample_graph(3, int(rng.integers(2**31)))
        inst = sample_instance(g, spec, (1.0,), 0.0, int(rng.integers(2**31)))
        run = optimal_run(inst, spec)
        bf_edge, _ = brute_force_virtual_surplus(inst, spec)
        won = [e for e, x in run.allocation.items() if x[0] > 0.0]
        winner = won[0] if won else None
        if winner != bf_edge:
            errs.append(f"exact winner mismatch on instance {k}")
            break
    return errs


def _check_vcg(rng) -> list[str]:
    errs = []
    spec = dist_mod.get_distribution("u01")
    for k in range(50):
        g = sample_graph(3, int(rng.integers(2**31)))
        inst = sample_instance(g, spec, (1.0, 0.5), 0.0, int(rng.integers(2**31)))
        out = vcg_price(inst)
        try:
            out.validate(inst)
        except ValueError as exc:
            errs.append(f"vcg outcome invalid on instance {k}: {exc}")
            break
    return errs


def _check_gradients(rng) -> list[str]:
    """Finite-difference check of the full mechanism revenue gradient."""
    errs = []
    net = BundleNet(2, 1, hidden=(8,), d_y=6, seed=3)
    spec = dist_mod.get_distribution("u01")
    batch = sample_batch(2, spec, (1.0,), 0.0, 4, np.random.default_rng(7))
    from jointauction.bundlenet import mechanism_forward

    def revenue():
        out = mechanism_forward(net, batch.edge_r, batch.edge_s, batch.vals_r, batch.vals_s, batch.ctrs)
        return (out["pay_r"] + out["pay_s"]).sum(axis=1).mean()

    loss = revenue()
    dc.backward(loss)
    for p in net.parameters()[:4]:
        flat = p.data.ravel()
        i = int(rng.integers(flat.size))
        eps = 1e-6
        old = flat[i]
        flat[i] = old + eps
        up = float(revenue().data)
        flat[i] = old - eps
        dn = float(revenue().data)
        flat[i] = old
        fd = (up - dn) / (2 * eps)
        an = p.grad.ravel()[i]
        if abs(fd - an) > 1e-5 * max(1.0, abs(fd)):
            errs.append(f"gradient mismatch: analytic {an:.3e} vs fd {fd:.3e}")
    return errs


def _check_bundlenet(rng) -> list[str]:
    errs = []
    net = BundleNet(3, 2, hidden=(16,), d_y=8, seed=1)
    spec = dist_mod.get_distribution("u01")
    batch = sample_batch(3, spec, (1.0, 0.5), 0.0, 64, rng)
    out = forward_arrays(net, batch)
    A = out["A"]
    if A.min() < -1e-12:
        errs.append("negative allocation probability")
    if A.sum(axis=1).max() > 1.0 + 1e-9:
        errs.append("slot over-allocated")
    if A.sum(axis=2).max() > 1.0 + 1e-9:
        errs.append("bundle over-allocated")
    br, bs = batch.bid_matrices()
    aw = (A * batch.ctrs).sum(axis=2)
    if (out["pay_r"] - br * aw).max() > 1e-9 or (out["pay_s"] - bs * aw).max() > 1e-9:
        errs.append("payment exceeds allocated value (IR violated)")
    if out["pay_r"].min() < -1e-12 or out["pay_s"].min() < -1e-12:
        errs.append("negative payment")
    return errs


def run(seed: int = 0) -> int:
    rng = np.random.default_rng(seed)
    suites = [
        ("distributions", _check_distributions),
        ("exact-vs-brute-force", _check_exact),
        ("vcg-outcomes", _check_vcg),
        ("autodiff-gradients", _check_gradients),
        ("bundlenet-invariants", _check_bundlenet),
    ]
    failures = 0
    for name, fn in suites:
        errs = fn(rng)
        status = "ok" if not errs else "FAIL"
        print(f"[{status}] {name}")
        for e in errs:
            print(f"       {e}")
        failures += len(errs)
    return 0 if failures == 0 else 1
