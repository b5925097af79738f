"""Command-line entry point.

Subcommands: train, eval, exact, table, grid, forward, selftest.  Every run
writes a manifest (config hash, seed, git describe, backend, wall time)
next to its outputs; reruns with identical manifests reproduce outputs
bit-exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from jointauction import evaluation as ev
from jointauction import market, training
from jointauction.backend import backend_name
from jointauction.bundlenet import load_checkpoint, outcome_from_instance, save_checkpoint


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad config file {path}: {exc}")


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).parent,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _write_manifest(out_dir: Path, config: dict, seed: int, started: float) -> None:
    canon = json.dumps(config, sort_keys=True)
    manifest = {
        "config": config,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": seed,
        "git": _git_describe(),
        "backend": backend_name(),
        "wall_time_s": round(time.time() - started, 3),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _train_config(args) -> training.TrainConfig:
    cfg = _load_config(args.config)
    setting = args.setting or cfg.pop("setting", None)
    kwargs = {}
    if setting:
        s = ev.parse_setting(setting)
        kwargs.update(
            n_bundles=s.n_bundles, n_slots=s.n_slots, dist=s.dist, ctrs=s.ctrs
        )
    known = set(training.TrainConfig.__dataclass_fields__)
    for key, val in cfg.items():
        if key not in known:
            raise ConfigError(f"unknown training config key {key!r}")
        kwargs[key] = tuple(val) if isinstance(val, list) else val
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.samples is not None:
        kwargs["train_samples"] = args.samples
    return training.TrainConfig(**kwargs)


def cmd_train(args) -> int:
    started = time.time()
    cfg = _train_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = training.train(cfg)
    save_checkpoint(out_dir / "checkpoint.npz", state.net, extra={"config": cfg.to_dict()})
    training.write_history_csv(state.history, out_dir / "history.csv")
    _write_manifest(out_dir, cfg.to_dict(), cfg.seed, started)
    last = state.history[-1] if state.history else {}
    print(
        f"trained {cfg.dist} n={cfg.n_bundles} m={cfg.n_slots}: "
        f"revenue={last.get('revenue', float('nan')):.4f} "
        f"mean_regret={last.get('mean_regret', float('nan')):.5f}"
    )
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    net, extra = load_checkpoint(args.checkpoint)
    cfg = extra.get("config", {})
    setting = args.setting or cfg.get("setting")
    if setting:
        s = ev.parse_setting(setting)
        dist_name, n, ctrs = s.dist, s.n_bundles, s.ctrs
    else:
        dist_name, n, ctrs = cfg["dist"], cfg["n_bundles"], tuple(cfg["ctrs"])
    dist = ev.dist_mod.get_distribution(dist_name)
    samples = args.samples or 5000
    seed = args.seed if args.seed is not None else 1
    rev, stderr = ev.mc_revenue(net, dist, n, ctrs, 0.0, samples, seed)
    reg = ev.mc_regret(
        net, dist, n, ctrs, 0.0, min(samples, args.regret_samples), seed + 1
    )
    report = {
        "dist": dist_name,
        "n_bundles": n,
        "revenue": rev,
        "stderr": stderr,
        "regret_mean_edge": reg["mean_edge"],
        "regret_max_edge": reg["max_edge"],
        "regret_per_bidder_2n": reg["mean_per_bidder_2n"],
        "regret_per_bidder_present": reg["mean_per_bidder_present"],
        "samples": samples,
    }
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "eval.json", "w") as fh:
        json.dump(report, fh, indent=2)
    _write_manifest(out_dir, {"checkpoint": str(args.checkpoint), "samples": samples}, seed, started)
    print(json.dumps(report, indent=2))
    return 0


def cmd_exact(args) -> int:
    started = time.time()
    setting = ev.parse_setting(args.setting)
    if setting.n_slots != 1:
        raise ConfigError("the exact mechanism only supports single-slot settings")
    samples = args.samples or 100_000
    seed = args.seed if args.seed is not None else 1
    rows = ev.compare_table(
        [setting], ["optimal", "rvcg", "rvcg_unclamped"], samples, seed
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ev.write_table_csv(rows, out_dir / "exact.csv")
    _write_manifest(out_dir, {"setting": setting.label, "samples": samples}, seed, started)
    for row in rows:
        print(f"{row['setting']:>8} {row['mechanism']:>15} {row['revenue']:.4f} ± {row['stderr']:.4f}")
    return 0


def cmd_table(args) -> int:
    started = time.time()
    settings = [s.strip() for s in args.settings.split(",") if s.strip()]
    mechanisms = [m.strip() for m in args.mechanisms.split(",") if m.strip()]
    for label in settings:
        if ev.parse_setting(label).n_slots != 1 and "optimal" in mechanisms:
            raise ConfigError(f"optimal mechanism unavailable for multi-slot {label}")
    samples = args.samples or 100_000
    seed = args.seed if args.seed is not None else 1
    rows = ev.compare_table(settings, mechanisms, samples, seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ev.write_table_csv(rows, out_dir / "table.csv")
    _write_manifest(out_dir, {"settings": settings, "mechanisms": mechanisms, "samples": samples}, seed, started)
    for row in rows:
        print(f"{row['setting']:>8} {row['mechanism']:>15} {row['revenue']:.4f} ± {row['stderr']:.4f}")
    return 0


def cmd_grid(args) -> int:
    started = time.time()
    dist = ev.dist_mod.get_distribution(args.dist)
    if args.checkpoint:
        mech, name = load_checkpoint(args.checkpoint)[0], "bundlenet"
    else:
        mech, name = "exact", "exact"
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fixed_bids = [float(x) for x in args.fixed.split(",")]
    for fixture in ("shared", "disjoint"):
        for fixed in fixed_bids:
            res = ev.allocation_grid(mech, fixture, fixed, dist, args.resolution)
            stem = f"grid_{name}_{fixture}_{fixed:g}"
            payload = {"axis": res["axis"], "win": res["win"]}
            if res["boundary"] is not None:
                payload["boundary"] = res["boundary"]
            np.savez(out_dir / f"{stem}.npz", **payload)
    _write_manifest(
        out_dir,
        {"dist": args.dist, "fixed": fixed_bids, "resolution": args.resolution, "mechanism": name},
        args.seed or 0,
        started,
    )
    print(f"wrote grids to {out_dir}")
    return 0


def cmd_forward(args) -> int:
    net, _ = load_checkpoint(args.checkpoint)
    with open(args.instance) as fh:
        instance = market.instance_from_dict(json.load(fh))
    outcome = outcome_from_instance(net, instance)
    print(json.dumps(outcome.to_rows(), indent=2))
    return 0


def cmd_selftest(args) -> int:
    """Quick property suites; nonzero exit on any violation."""
    from jointauction import selftest

    return selftest.run(seed=args.seed if args.seed is not None else 0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="jointauction")
    parser.add_argument("--workers", type=int, default=os.cpu_count(), help="data-parallel workers (vectorized kernels already use one core each)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--setting", default=None, help='e.g. "U_2", "U_10x5", "LN_8x5", "N_3"')

    p = sub.add_parser("train", help="run the full training loop")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="revenue/regret report for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--regret-samples", type=int, default=2000)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("exact", help="Monte-Carlo optimal vs RVCG revenue")
    common(p)
    p.set_defaults(fn=cmd_exact)

    p = sub.add_parser("table", help="multi-setting comparison CSV")
    common(p)
    p.add_argument("--settings", required=True, help="comma-separated labels")
    p.add_argument("--mechanisms", default="optimal,rvcg")
    p.set_defaults(fn=cmd_table)

    p = sub.add_parser("grid", help="allocation-grid export for the two-bundle fixtures")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--dist", default="u01")
    p.add_argument("--fixed", default="0,0.25,0.5,0.75")
    p.add_argument("--resolution", type=int, default=101)
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("forward", help="evaluate a checkpoint on a serialized instance")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instance", required=True)
    p.set_defaults(fn=cmd_forward)

    p = sub.add_parser("selftest", help="run the quick property suites")
    common(p)
    p.set_defaults(fn=cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
