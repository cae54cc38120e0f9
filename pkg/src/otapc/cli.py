"""Command-line runner: ``otapc COMMAND [--config PATH] [--out DIR] [--seed N]``.

Every command writes its data files plus ``manifest.json`` into ``--out``.
The manifest records the schema version, the resolved config, its SHA-256,
the seed and package versions; together with the config it fixes every
output byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channel import NoiseSpec
from .config import CONFIG_FOR_COMMAND, ConfigError, config_to_dict, load_config
from .fl_sim import SimulationError, final_accuracies, run_experiment, stats_trajectory, window_means
from .optimizer import build_profile_arrays, solve, sweep_beta, sweep_rows
from .oracle import compare_with_oracle, random_instance
from .stats import GradientStats

SCHEMA_VERSION = 1
FIG2_WINDOW = 20


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return None
    return v


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_jsonl(path: Path, rows) -> None:
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(_jsonable(row), sort_keys=True) + "\n")


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _csv_cell(v) for k, v in row.items()})


def _csv_cell(v):
    v = _jsonable(v)
    if isinstance(v, list):
        return ";".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def config_hash(cfg) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _seeds(master: int, n: int) -> list[int]:
    return [master + i for i in range(n)]


def _quantiles(v) -> dict:
    q25, q50, q75 = np.quantile(v, [0.25, 0.5, 0.75])
    return {"median": float(q50), "q25": float(q25), "q75": float(q75)}


# ---------------------------------------------------------------------------
# commands; each returns (list of written file names, exit code)


def cmd_sweep_beta(cfg, out: Path, seed: int):
    files = []
    for snr in cfg.snr_db:
        noise = NoiseSpec(cfg.noise_variance, cfg.dimension)
        profile = build_profile_arrays(cfg.magnitudes, cfg.peak_power(snr), cfg.alpha)
        betas = cfg.beta_grid()
        rows = sweep_rows(betas, sweep_beta(profile, GradientStats(cfg.alpha, 1.0), noise, betas))
        name = f"sweep_beta_{snr:g}dB.csv"
        write_csv(out / name, rows)
        files.append(name)
    return files, 0


def cmd_solve_once(cfg, out: Path, seed: int):
    results = []
    for snr in cfg.snr_db:
        noise = NoiseSpec(cfg.noise_variance, cfg.dimension)
        profile = build_profile_arrays(cfg.magnitudes, cfg.peak_power(snr), cfg.alpha)
        stats = GradientStats(cfg.alpha, cfg.beta)
        sol = solve(profile, stats, noise)
        results.append({
            "snr_db": snr,
            "beta": cfg.beta,
            "powers": sol.powers.tolist(),
            "peak_power": cfg.peak_power(snr),
            "eta": sol.eta,
            "l_star": sol.l_star,
            "mse": sol.mse.as_dict(),
            "candidates": [
                {"l": c.l, "eta": c.eta, "mse_total": c.value, "legal": c.legal} for c in sol.candidates
            ],
        })
    write_json(out / "solve_once.json", results)
    return ["solve_once.json"], 0


def cmd_oracle_check(cfg, out: Path, seed: int):
    rows = []
    for trial in range(cfg.trials):
        inst = random_instance(cfg.k, trial, seed, cfg.beta_range, cfg.snr_range_db)
        row = {"trial": trial, **compare_with_oracle(inst, cfg.restarts, seed=trial)}
        row["pass"] = row["mse_solve"] <= row["mse_oracle"] * (1 + cfg.tolerance)
        row["interval_agrees"] = row["l_star"] == row["l_star_interval"]
        rows.append(row)
    write_csv(out / "oracle_check.csv", rows)
    failures = [r["trial"] for r in rows if not (r["pass"] and r["interval_agrees"])]
    summary = {
        "trials": cfg.trials,
        "failures": failures,
        "max_rel_gap": max(r["rel_gap"] for r in rows),
    }
    write_json(out / "oracle_summary.json", summary)
    if failures:
        print(f"oracle-check: {len(failures)} of {cfg.trials} instances failed: {failures}", file=sys.stderr)
    return ["oracle_check.csv", "oracle_summary.json"], 1 if failures else 0


def cmd_fl_run(cfg, out: Path, seed: int):
    res = run_experiment(cfg, seed)
    rows = [tr.as_dict() for tr in res.traces]
    write_csv(out / "traces.csv", rows)
    write_jsonl(out / "traces.jsonl", rows)
    write_json(out / "summary.json", res.summary)
    return ["traces.csv", "traces.jsonl", "summary.json"], 0


def cmd_fig2_stats(cfg, out: Path, seed: int):
    seeds = _seeds(seed, cfg.n_seeds)
    rows, summary = [], {}
    for part in ("iid", "noniid"):
        alphas, betas = stats_trajectory(dataclasses.replace(cfg, partition=part), seeds)
        a_med, b_med = np.median(alphas, axis=0), np.median(betas, axis=0)
        for t in range(cfg.rounds):
            rows.append({"partition": part, "t": t + 1, "alpha_median": a_med[t], "beta_median": b_med[t]})
        summary[part] = {
            "window": FIG2_WINDOW,
            "alpha_window_means": window_means(a_med, FIG2_WINDOW).tolist(),
            "beta_window_means": window_means(b_med, FIG2_WINDOW).tolist(),
        }
    write_csv(out / "fig2_stats.csv", rows)
    write_json(out / "fig2_summary.json", {"seeds": seeds, **summary})
    return ["fig2_stats.csv", "fig2_summary.json"], 0


def _grid_sweep(cfg, out: Path, seed: int, key: str, grid, name: str):
    seeds = _seeds(seed, cfg.n_seeds)
    rows = []
    for value in grid:
        acc = final_accuracies(dataclasses.replace(cfg, **{key: value}), seeds)
        for scheme, v in acc.items():
            rows.append({key: value, "scheme": scheme, **_quantiles(v), "n_seeds": len(seeds)})
    write_csv(out / f"{name}.csv", rows)
    return [f"{name}.csv"], 0


def cmd_snr_sweep(cfg, out: Path, seed: int):
    return _grid_sweep(cfg, out, seed, "snr_db", cfg.snr_grid_db, "snr_sweep")


def cmd_device_sweep(cfg, out: Path, seed: int):
    return _grid_sweep(cfg, out, seed, "device_count", cfg.device_grid, "device_sweep")


COMMANDS = {
    "sweep-beta": cmd_sweep_beta,
    "solve-once": cmd_solve_once,
    "oracle-check": cmd_oracle_check,
    "fl-run": cmd_fl_run,
    "fig2-stats": cmd_fig2_stats,
    "snr-sweep": cmd_snr_sweep,
    "device-sweep": cmd_device_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otapc", description="AirComp power control experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, default=None, help="JSON config; defaults apply when omitted")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (created if needed)")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--k", type=int, default=None, help="oracle-check: devices per instance")
    p.add_argument("--trials", type=int, default=None, help="oracle-check: number of instances")
    return p


def _resolve_config(args):
    cfg = load_config(args.config, args.command)
    overrides = {}
    if args.seed is not None and hasattr(cfg, "master_seed"):
        overrides["master_seed"] = args.seed
    if args.command == "oracle-check":
        if args.k is not None:
            overrides["k"] = args.k
        if args.trials is not None:
            overrides["trials"] = args.trials
    elif args.k is not None or args.trials is not None:
        raise ConfigError("--k and --trials apply to oracle-check only")
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def manifest(command: str, cfg, seed: int, files: list[str]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config_to_dict(cfg),
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "outputs": sorted(files),
        "versions": {
            "otapc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"otapc: config error: {exc}", file=sys.stderr)
        return 2
    seed = getattr(cfg, "master_seed", 0 if args.seed is None else args.seed)
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"otapc: cannot create output directory {out}: {exc}", file=sys.stderr)
        return 2
    try:
        files, code = COMMANDS[args.command](cfg, out, seed)
    except SimulationError as exc:
        print(f"otapc: simulation failed: {exc}", file=sys.stderr)
        return 3
    write_json(out / "manifest.json", manifest(args.command, cfg, seed, files))
    return code


if __name__ == "__main__":
    sys.exit(main())
