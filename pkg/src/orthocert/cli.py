"""Command-line front end.

Subcommands: verify (one certification method), bench (all three methods
under equal budgets), attack (PGD on the posterior-mean network), empirical
(posterior-sampling robustness estimate), ablate (grad-scale sweep).

Every report embeds the fully resolved configuration and seed.  Reports are
byte-reproducible for a fixed seed and any worker count; wall-clock timings
go to a separate ``<out>.timing.json`` sidecar so the main report stays
deterministic.

Exit codes: 0 success, 2 usage/IO error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from .bounds import VerifierConfig
from .certify import (CertifyParams, certify_gie, certify_pie,
                      certify_pure_sampling, run_budgeted_comparison)
from .evaluate import (ablate_rho, build_report, empirical_psafe,
                       iteration_stats, pgd_attack, timing_report)
from .inputs import load_inputs, load_labels
from .network import (NetworkDef, RobustnessSpec, load_network,
                      make_classification_spec)

__all__ = ["main", "entry"]

_METHODS = {
    "sampling": certify_pure_sampling,
    "pie": certify_pie,
    "gie": certify_gie,
}

_DEFAULTS = {
    "epsilon": 0.0,
    "method": "pie",
    "verifier": "ibp",
    "lambda": 0.25,
    "rho": 0.0,
    "samples": None,
    "max_verifier_calls": 1000,
    "max_iters": 64,
    "ie_cap": 25,
    "mc_samples": 1_000_000,
    "seed": 0,
    "workers": 1,
    "disjoint": False,
    "steps": 40,
    "step_size": None,
    "clip": None,
    "halfspace": None,
    "labels": None,
    "input_indices": None,
    "out": None,
    "rho_grid": "0,0.1,0.25,0.5",
    "sampling_lambda": None,
}


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--network", required=True, help="network interchange JSON file")
    sub.add_argument("--inputs", required=True, help="CSV vectors or IDX image file")
    sub.add_argument("--labels", default=None, help="CSV or IDX label file")
    sub.add_argument("--input-indices", dest="input_indices", default=None,
                     help="comma-separated row indices to use")
    sub.add_argument("--epsilon", type=float, default=None, help="input ball radius")
    sub.add_argument("--verifier", choices=["ibp", "lbp"], default=None)
    sub.add_argument("--lambda", dest="lambda_", type=float, default=None,
                     help="base box scale factor")
    sub.add_argument("--rho", type=float, default=None,
                     help="gradient-based extra scale factor")
    sub.add_argument("--samples", type=int, default=None, help="number of draws")
    sub.add_argument("--max-verifier-calls", dest="max_verifier_calls", type=int, default=None)
    sub.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    sub.add_argument("--ie-cap", dest="ie_cap", type=int, default=None)
    sub.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--disjoint", action="store_true", default=None,
                     help="skip draws already inside the certified union")
    sub.add_argument("--halfspace", action="append", default=None,
                     help="explicit half-space 'a1,a2,...:b'; repeatable")
    sub.add_argument("--clip", default=None, help="input clip domain 'lo,hi'")
    sub.add_argument("--out", default=None, help="report path (stdout when omitted)")
    sub.add_argument("--config", default=None,
                     help="JSON file with the same keys; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthocert")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("verify", help="certify inputs with one method")
    _add_common(p)
    p.add_argument("--method", choices=sorted(_METHODS), default=None)

    p = subs.add_parser("bench", help="all three methods under equal budgets")
    _add_common(p)
    p.add_argument("--sampling-lambda", dest="sampling_lambda", type=float, default=None,
                   help="separate scale for the sampling baseline")

    p = subs.add_parser("attack", help="PGD attack on the posterior-mean network")
    _add_common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--step-size", dest="step_size", type=float, default=None)

    p = subs.add_parser("empirical", help="posterior-sampling robustness estimate")
    _add_common(p)

    p = subs.add_parser("ablate", help="sweep the gradient scale factor")
    _add_common(p)
    p.add_argument("--rho-grid", dest="rho_grid", default=None,
                   help="comma-separated grid, must include 0")
    return parser


def _parse_halfspaces(items) -> Optional[list]:
    if items is None:
        return None
    parsed = []
    for item in items:
        if isinstance(item, (list, tuple)):
            coeffs, offset = item
        else:
            head, sep, tail = str(item).rpartition(":")
            if not sep:
                raise ValueError(f"half-space '{item}' must look like 'a1,a2,...:b'")
            coeffs = [float(v) for v in head.split(",")]
            offset = float(tail)
        parsed.append((np.asarray(coeffs, dtype=np.float64), float(offset)))
    return parsed


def _parse_clip(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        lo, hi = value
    else:
        lo, hi = (float(v) for v in str(value).split(","))
    return (float(lo), float(hi))


def _parse_indices(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(",") if v.strip() != ""]


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file, and explicit flags."""
    cfg = dict(_DEFAULTS)
    cfg["command"] = args.command
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        for key, value in loaded.items():
            cfg[key] = value
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        name = "lambda" if key == "lambda_" else key
        if value is not None:
            cfg[name] = value
    for key in ("network", "inputs"):
        if not cfg.get(key):
            raise ValueError(f"missing required option '--{key}'")
    cfg["halfspace"] = _parse_halfspaces(cfg.get("halfspace"))
    cfg["clip"] = _parse_clip(cfg.get("clip"))
    cfg["input_indices"] = _parse_indices(cfg.get("input_indices"))
    if cfg.get("samples") is None:
        cfg["samples"] = 50 if args.command == "empirical" else 10
    if isinstance(cfg.get("rho_grid"), str):
        cfg["rho_grid"] = [float(v) for v in cfg["rho_grid"].split(",")]
    return cfg


def _certify_params(cfg: dict, seed: int) -> CertifyParams:
    return CertifyParams(
        samples=int(cfg["samples"]),
        scale=float(cfg["lambda"]),
        grad_scale=float(cfg["rho"]),
        max_verifier_calls=int(cfg["max_verifier_calls"]),
        max_expand_iters=int(cfg["max_iters"]),
        seed=seed,
        ie_cap=int(cfg["ie_cap"]),
        mc_samples=int(cfg["mc_samples"]),
        disjoint=bool(cfg["disjoint"]),
    )


def _input_seed(master: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=master, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _build_specs(net: NetworkDef, xs: np.ndarray, labels, cfg: dict) -> list[RobustnessSpec]:
    halfspaces = cfg["halfspace"]
    specs = []
    for i, x in enumerate(xs):
        if halfspaces is not None:
            specs.append(RobustnessSpec(x, cfg["epsilon"], tuple(
                (a, b) for a, b in halfspaces), cfg["clip"]))
        else:
            if labels is None:
                raise ValueError("need --labels or --halfspace to build a spec")
            label = int(labels[i])
            targets = [c for c in range(net.output_dim) if c != label]
            specs.append(make_classification_spec(
                x, cfg["epsilon"], label, targets, net.output_dim, cfg["clip"]))
    return specs


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(doc: dict, out: Optional[str]) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonify) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_timing(doc: dict, out: Optional[str]) -> None:
    if out is not None:
        with open(out + ".timing.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonify)
            fh.write("\n")


def _write_csv(rows: list[dict], header: list[str], out: Optional[str]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([
            repr(float(row[h])) if isinstance(row[h], float) else row[h]
            for h in header
        ])
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


def _pool_map(fn, payloads, workers: int):
    if workers <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


def _verify_task(payload):
    net, spec, params, mode, method = payload
    return _METHODS[method](net, net.posterior, spec, params, VerifierConfig(mode=mode))


def _bench_task(payload):
    net, spec, params, mode, sampling_scale = payload
    return run_budgeted_comparison(net, net.posterior, spec, params,
                                   verifier_mode=mode, sampling_scale=sampling_scale)


def _load_problem(cfg: dict):
    net = load_network(cfg["network"])
    xs = load_inputs(cfg["inputs"], cfg["input_indices"])
    if xs.shape[1] != net.input_dim:
        raise ValueError(
            f"inputs have dimension {xs.shape[1]}, network expects {net.input_dim}")
    labels = None
    if cfg["labels"]:
        labels = load_labels(cfg["labels"], cfg["input_indices"])
        if labels.shape[0] < xs.shape[0]:
            raise ValueError("fewer labels than inputs")
    return net, xs, labels


def _config_echo(cfg: dict) -> dict:
    echo = {k: v for k, v in cfg.items() if k != "halfspace"}
    if cfg.get("halfspace") is not None:
        echo["halfspace"] = [[a.tolist(), b] for a, b in cfg["halfspace"]]
    return echo


def cmd_verify(cfg: dict) -> int:
    net, xs, labels = _load_problem(cfg)
    specs = _build_specs(net, xs, labels, cfg)
    t0 = time.perf_counter()
    payloads = [(net, spec, _certify_params(cfg, _input_seed(cfg["seed"], i)),
                 cfg["verifier"], cfg["method"]) for i, spec in enumerate(specs)]
    certs = _pool_map(_verify_task, payloads, int(cfg["workers"]))
    results = [{"input_index": i, "certificate": c.to_json_dict()}
               for i, c in enumerate(certs)]
    report = {
        "command": "verify",
        "config": _config_echo(cfg),
        "mean_p_safe": float(np.mean([c.p_safe for c in certs])),
        "results": results,
    }
    _write_json(report, cfg["out"])
    _write_timing({"wall_clock": time.perf_counter() - t0,
                   "per_input": [c.timings for c in certs]}, cfg["out"])
    return 0


def cmd_bench(cfg: dict) -> int:
    net, xs, labels = _load_problem(cfg)
    specs = _build_specs(net, xs, labels, cfg)
    t0 = time.perf_counter()
    payloads = [(net, spec, _certify_params(cfg, _input_seed(cfg["seed"], i)),
                 cfg["verifier"], cfg.get("sampling_lambda"))
                for i, spec in enumerate(specs)]
    rows = _pool_map(_bench_task, payloads, int(cfg["workers"]))
    means = {m: float(np.mean([r[m].p_safe for r in rows]))
             for m in ("sampling", "pie", "gie")}
    network_name = os.path.basename(str(cfg["network"]))
    csv_rows = [{
        "network": network_name,
        "mean_psafe_sampling": means["sampling"],
        "mean_psafe_pie": means["pie"],
        "mean_psafe_gie": means["gie"],
        "budget": int(cfg["max_verifier_calls"]),
        "seed": int(cfg["seed"]),
    }]
    _write_csv(csv_rows, ["network", "mean_psafe_sampling", "mean_psafe_pie",
                          "mean_psafe_gie", "budget", "seed"], cfg["out"])
    if cfg["out"] is not None:
        histograms = {m: iteration_stats([r[m] for r in rows])["histogram"]
                      for m in ("sampling", "pie", "gie")}
        detail = {
            "command": "bench",
            "config": _config_echo(cfg),
            "means": means,
            "iteration_histograms": histograms,
            "results": [{"input_index": i,
                         "certificates": {m: r[m].to_json_dict() for m in r}}
                        for i, r in enumerate(rows)],
        }
        _write_json(detail, cfg["out"] + ".json")
        _write_timing({"wall_clock": time.perf_counter() - t0,
                       "per_input": [timing_report(r) for r in rows]},
                      cfg["out"])
    return 0


def cmd_attack(cfg: dict) -> int:
    net, xs, labels = _load_problem(cfg)
    if labels is None:
        raise ValueError("attack needs --labels")
    records = []
    for i, x in enumerate(xs):
        result = pgd_attack(net, net.posterior.mean, x, int(labels[i]),
                            epsilon=float(cfg["epsilon"]), steps=int(cfg["steps"]),
                            step_size=cfg["step_size"], clip=cfg["clip"])
        records.append({
            "input_index": i,
            "success": bool(result.success),
            "clean_margin": result.margins[0],
            "final_margin": result.margins[-1],
        })
    report = build_report(records, metadata=_config_echo(cfg))
    report["command"] = "attack"
    _write_json(report, cfg["out"])
    if cfg["out"] is not None:
        _write_csv(records, ["input_index", "success", "clean_margin", "final_margin"],
                   cfg["out"] + ".csv")
    return 0


def cmd_empirical(cfg: dict) -> int:
    net, xs, labels = _load_problem(cfg)
    specs = _build_specs(net, xs, labels, cfg)
    records = []
    for i, spec in enumerate(specs):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=int(cfg["seed"]), spawn_key=(i,)))
        estimate = empirical_psafe(net, net.posterior, spec, int(cfg["samples"]), rng)
        records.append({"input_index": i, "estimate": estimate})
    report = build_report(records, metadata=_config_echo(cfg))
    report["command"] = "empirical"
    _write_json(report, cfg["out"])
    if cfg["out"] is not None:
        _write_csv(records, ["input_index", "estimate"], cfg["out"] + ".csv")
    return 0


def cmd_ablate(cfg: dict) -> int:
    net, xs, labels = _load_problem(cfg)
    specs = _build_specs(net, xs, labels, cfg)
    params = _certify_params(cfg, int(cfg["seed"]))
    rows = ablate_rho(net, net.posterior, specs, cfg["rho_grid"], params,
                      verifier_mode=cfg["verifier"])
    network_name = os.path.basename(str(cfg["network"]))
    csv_rows = [{
        "rho": float(r["rho"]),
        "network": network_name,
        "mean_psafe": r["mean_psafe"],
        "budget": int(cfg["max_verifier_calls"]),
        "seed": int(cfg["seed"]),
    } for r in rows]
    _write_csv(csv_rows, ["rho", "network", "mean_psafe", "budget", "seed"], cfg["out"])
    return 0


_COMMANDS = {
    "verify": cmd_verify,
    "bench": cmd_bench,
    "attack": cmd_attack,
    "empirical": cmd_empirical,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
