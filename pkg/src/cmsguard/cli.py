"""
Command-line entry point.

Exit codes: 0 when every requested guarantee holds, 1 when a check fails,
2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .requirements import (
    TranslationError,
    verify_certificate,
    weights_from_json,
    weights_to_json,
)
from .selection import METHODS, BruteForceBudgetError, SelectionProblem, expected_iterations, run_method
from .structural import ModelError
from .experiments.config import ConfigError, load_config
from .experiments.pipeline import (
    build_system,
    preselect,
    reduced_frf,
    run_pipeline,
    standard_cutoff_baseline,
    translate_system,
    verify_aposteriori,
)
from .experiments.report import emit_report

log = logging.getLogger("cmsguard")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _methods(text):
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}")
    return names


def _selection(text):
    """``id=1,2,3`` -> ``(id, [1, 2, 3])``; an empty list is allowed."""
    if "=" not in text:
        raise argparse.ArgumentTypeError("selection must look like COMPONENT=ID,ID,...")
    cid, ids = text.split("=", 1)
    try:
        return cid.strip(), [int(i) for i in ids.split(",") if i.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"mode ids must be integers: {ids!r}") from None


def _write_table(out_dir, name, columns, rows, fmt):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        p = out / f"{name}.json"
        doc = {"columns": columns, "rows": [[r.get(c) for c in columns] for r in rows]}
        p.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    else:
        p = out / f"{name}.csv"
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(columns)
            for r in rows:
                wr.writerow(["" if r.get(c) is None else r.get(c) for c in columns])
    return p


def _finite(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _system_and_reqs(cfg):
    system = build_system(cfg)
    req = cfg.raw["requirement"]
    return system, req["gamma"], req["scale"]


def _component(system, cid):
    for j, c in enumerate(system.components):
        if c.id == cid:
            return j, c
    raise ConfigError(f"unknown component {cid!r}; available: {[c.id for c in system.components]}")


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args, sweep):
    cfg = load_config(args.config)
    report = run_pipeline(cfg, methods=args.methods, brute_budget=args.brute_budget,
                          parallel=args.parallel, sweep=sweep)
    for p in emit_report(report, args.format, args.out):
        log.info("wrote %s", p)
    for r in report.rows:
        print(f"{r['sweep_value']!s:>10} {r['method']:<18} r={r['r_total']!s:<4} "
              f"component={r['component_satisfied']!s:<5} assembly={r['assembly_satisfied']!s:<5} "
              f"{r['error']}")
    ok = report.guarantees_verified
    print("guarantees verified" if ok else "guarantees NOT verified")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_translate(args):
    cfg = load_config(args.config)
    system, gamma, scale = _system_and_reqs(cfg)
    _, ws, n = translate_system(system, gamma, scale, parallel=args.parallel)
    cert = verify_certificate(ws, n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "weights.json").write_text(weights_to_json(ws) + "\n")
    rows = [{"freq_hz": _finite(f), "feasible": bool(ok), "objective": _finite(o),
             "min_certificate_eig": _finite(e), "rounds": int(r)}
            for f, ok, o, e, r in zip(system.grid.points_hz, ws.feasible, ws.objective,
                                      cert.min_eigenvalues, ws.rounds)]
    _write_table(out, "translation", list(rows[0]), rows, args.format)
    ok = bool(cert.passed and ws.feasible.all())
    print(f"{int(ws.feasible.sum())}/{len(ws.feasible)} feasible points, certificate "
          f"{'passed' if cert.passed else 'FAILED'}")
    return EXIT_OK if ok else EXIT_FAILED


def _load_weights(path, system):
    try:
        ws = weights_from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError, ModelError) as exc:
        raise ConfigError(f"cannot read weights {path}: {exc}") from None
    if not ws.grid.same_as(system.grid):
        raise ConfigError("weights were computed on a different frequency grid")
    return ws


def cmd_select(args):
    cfg = load_config(args.config)
    system, _, _ = _system_and_reqs(cfg)
    ws = _load_weights(args.weights, system)
    j, comp = _component(system, args.component)
    if not comp.reduce:
        raise ConfigError(f"component {comp.id!r} is not marked for reduction")
    v, w = ws.component(j)
    pool = preselect(comp, cfg.raw["preselection_multiplier"] * system.f_max)
    prob = SelectionProblem(comp.model, comp.modes, pool, v, w, system.grid, comp.frf,
                            ~ws.feasible)
    rows, ok = [], True
    for method in args.methods or cfg.methods:
        kw = {"budget": args.brute_budget or cfg.raw["brute_budget"]} if method == "brute_force" else {}
        try:
            res = run_method(prob, method, **kw)
        except BruteForceBudgetError as exc:
            print(f"{method}: {exc}")
            rows.append({"method": method, "error": str(exc)})
            continue
        counter_ok = res.iterations == expected_iterations(method, res.n_bar, res.count)
        ok &= res.satisfied and counter_ok
        rows.append({"method": method, "r": res.count, "n_bar": res.n_bar,
                     "selected": " ".join(map(str, res.selected)), "iterations": res.iterations,
                     "frf_evals": res.frf_evals, "satisfied": res.satisfied,
                     "max_scaled_error": _finite(res.max_value), "counter_ok": counter_ok,
                     "error": ""})
        print(f"{method:<18} r={res.count:<3} selected=[{' '.join(map(str, res.selected))}] "
              f"satisfied={res.satisfied}")
    cols = ["method", "r", "n_bar", "selected", "iterations", "frf_evals", "satisfied",
            "max_scaled_error", "counter_ok", "error"]
    _write_table(args.out, f"selection_{comp.id}", cols, rows, args.format)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_verify(args):
    cfg = load_config(args.config)
    system, gamma, _ = _system_and_reqs(cfg)
    chosen = dict(args.selection or [])
    unknown = set(chosen) - {c.id for c in system.components}
    if unknown:
        raise ConfigError(f"unknown component(s) in --selection: {sorted(unknown)}")
    full, red = [], []
    for c in system.components:
        full.append(c.frf)
        red.append(reduced_frf(c, chosen[c.id], system.grid) if c.id in chosen else c.frf)
    weights = None
    if args.weights:
        ws = _load_weights(args.weights, system)
        weights = (ws.v_a, ws.w_a)
    res = verify_aposteriori(full, red, system.interconnection, gamma, system.grid, weights)
    rows = [{"freq_hz": _finite(f), "relative_error": _finite(e),
             "weighted_error": None if res.weighted is None else _finite(res.weighted[i])}
            for i, (f, e) in enumerate(zip(system.grid.points_hz, res.relative_errors))]
    _write_table(args.out, "verify", ["freq_hz", "relative_error", "weighted_error"], rows,
                 args.format)
    print(f"max relative error {res.max_relative_error:.4g} (gamma {gamma:g}): "
          f"{'PASS' if res.verdict else 'FAIL'}")
    return EXIT_OK if res.verdict else EXIT_FAILED


def cmd_baseline(args):
    cfg = load_config(args.config)
    system, gamma, _ = _system_and_reqs(cfg)
    rows = []
    for mult in args.multipliers or cfg.raw["baselines"]:
        counts, chk = standard_cutoff_baseline(system, mult, gamma)
        row = {"multiplier": float(mult), "r_total": sum(counts.values()),
               "assembly_satisfied": chk.verdict,
               "max_relative_error": _finite(chk.max_relative_error)}
        row.update({f"r_{k}": v for k, v in counts.items()})
        rows.append(row)
        print(f"cutoff {mult:g} x f_max: r={row['r_total']} "
              f"max rel. error {chk.max_relative_error:.4g} "
              f"{'PASS' if chk.verdict else 'FAIL'}")
    cols = list(rows[0]) if rows else ["multiplier"]
    _write_table(args.out, "baseline", cols, rows, args.format)
    # the baseline carries no guarantee; a failing check is a result, not an error
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="YAML/JSON config file or builtin:<name>")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--methods", type=_methods, default=None,
                        help=f"comma-separated subset of {','.join(METHODS)}")
    common.add_argument("--brute-budget", type=int, default=None,
                        help="maximum FRF evaluations for brute force")
    common.add_argument("--parallel", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cmsguard", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="single run at the base parameters")
    sub.add_parser("sweep", parents=[common], help="run every sweep point")
    sub.add_parser("translate", parents=[common], help="compute and export weights")
    s = sub.add_parser("select", parents=[common], help="select modes of one component")
    s.add_argument("--weights", required=True, help="weights.json from 'translate'")
    s.add_argument("--component", required=True)
    s = sub.add_parser("verify", parents=[common], help="a-posteriori assembly check")
    s.add_argument("--selection", type=_selection, action="append",
                   help="COMPONENT=ID,ID,... (repeatable); unlisted components stay full")
    s.add_argument("--weights", help="use the weighted verdict with these assembly weights")
    s = sub.add_parser("baseline", parents=[common], help="standard cut-off selection")
    s.add_argument("--multipliers", type=float, nargs="+", default=None)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.parallel < 1:
        parser.error("--parallel must be at least 1")
    handlers = {
        "analyze": lambda a: cmd_run(a, sweep=False),
        "sweep": lambda a: cmd_run(a, sweep=True),
        "translate": cmd_translate,
        "select": cmd_select,
        "verify": cmd_verify,
        "baseline": cmd_baseline,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, TranslationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
