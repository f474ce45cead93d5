"""Command line entry point: ``forestlab <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 budget exceeded, 4 a certified
negative answer (not a dense forest, blocked direction, flow not dense).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .errors import BudgetExceeded, ForestLabError
from .experiments import borel_cantelli_budget, run_experiment, sigma
from .forest import (DEFAULT_CELL_BUDGET, SegmentQuery, directional_visibility,
                     visibility_profile)
from .io import dumps, grid_spec_dict, load_grid_spec, load_manifest, parse_direction
from .rationality import DEFAULT_BUDGET, dense_forest_check
from .spherecover import build_cap_cover, verify_cover
from .torus import FlowSpec, filling_time, is_delta_dense

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_NEGATIVE = 0, 2, 3, 4

# flags that only say where output goes; they are not part of the run
_NOT_CONFIG = {"out", "config", "func"}


class ValidationError(ValueError):
    pass


def _positive(kind):
    def conv(text):
        x = kind(text)
        if not x > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return x
    return conv


def _delta(text):
    x = float(text)
    if not 0 < x <= 0.5:
        raise argparse.ArgumentTypeError("delta must lie in (0, 1/2]")
    return x


def _eta(text):
    x = float(text)
    if not 0 < x < 1:
        raise argparse.ArgumentTypeError("eta must lie in (0, 1)")
    return x


def _vector(text):
    try:
        v = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {text}")
    if not all(math.isfinite(x) for x in v):
        raise argparse.ArgumentTypeError("vector entries must be finite")
    return v


def _default_threads():
    env = os.environ.get("FORESTLAB_THREADS")
    if env is None:
        return 1
    try:
        t = int(env)
    except ValueError:
        return 1
    return max(t, 1)


def _global_flags(p, suppress: bool):
    def dflt(x):
        return argparse.SUPPRESS if suppress else x
    p.add_argument("--seed", type=int, default=dflt(0), help="random seed (default 0)")
    p.add_argument("--threads", type=_positive(int), default=dflt(None),
                   help="worker processes (default $FORESTLAB_THREADS or 1)")
    p.add_argument("--budget", type=_positive(int), default=dflt(None),
                   help="enumeration/search budget override")
    p.add_argument("--out", default=dflt(None), help="output path (directory for experiment)")
    p.add_argument("--format", choices=["json", "csv", "table", "text"], default=dflt(None),
                   help="output format (default json; plain text for sigma)")
    p.add_argument("--config", default=dflt(None),
                   help="replay the configuration embedded in an earlier artifact")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forestlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"forestlab {__version__}")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command")

    c = sub.add_parser("check", parents=[common], help="search for a certificate that a union is not a dense forest")
    c.add_argument("--grids", required=True, help="grid-spec JSON file or preset name")
    c.add_argument("--height", type=_positive(int), default=50)
    c.add_argument("--tol", type=_positive(float), default=1e-9)

    v = sub.add_parser("visibility", parents=[common], help="directional visibility or a visibility profile")
    v.add_argument("--grids", required=True)
    v.add_argument("--epsilon", type=_positive(float), action="append", required=True,
                   help="repeat for a ladder of radii")
    v.add_argument("--anchor", type=_vector, default=None)
    v.add_argument("--direction", type=_vector, default=None)
    v.add_argument("--l-max", type=_positive(float), default=None)
    v.add_argument("--cover-scale", type=_positive(float), default=0.125,
                   help="direction cap radius as a multiple of epsilon (profile mode)")
    v.add_argument("--anchors", type=_positive(int), default=None,
                   help="anchor count (profile mode, default 4^n)")

    f = sub.add_parser("flow", parents=[common], help="density and filling time of torus flows")
    f.add_argument("--u", required=True, help="direction: comma list, 'golden' or 'axis'")
    f.add_argument("--dim", type=_positive(int), default=2, help="dimension for the 'axis' preset")
    f.add_argument("--delta", type=_delta, required=True)
    f.add_argument("--T", type=_positive(float), default=None)
    f.add_argument("--S", type=_positive(int), default=None)
    f.add_argument("--mode", choices=["continuous", "discrete", "fill"], default="continuous")

    cv = sub.add_parser("cover", parents=[common], help="bi-spherical cap cover of S^d")
    cv.add_argument("--d", type=_positive(int), required=True)
    cv.add_argument("--eta", type=_eta, required=True)
    cv.add_argument("--verify-trials", type=int, default=100_000)

    e = sub.add_parser("experiment", parents=[common], help="run a metrical sweep from a manifest")
    e.add_argument("--manifest", required=True)

    s = sub.add_parser("sigma", parents=[common], help="the exponent penalty d^2 (d+1) / (k - d^2)")
    s.add_argument("--d", type=_positive(int), required=True)
    s.add_argument("--k", type=_positive(int), required=True)
    s.add_argument("--lambda", dest="lam", type=_positive(float), default=None,
                   help="also report the Borel-Cantelli exponent at this lambda")
    return p


def _validate(args):
    """Cross-flag checks that argparse cannot express."""
    if args.command == "visibility":
        if (args.anchor is None) != (args.direction is None):
            raise ValidationError("--anchor and --direction go together")
        if args.anchor is not None:
            if len(args.epsilon) != 1:
                raise ValidationError("a single query takes one --epsilon")
            if len(args.anchor) != len(args.direction):
                raise ValidationError("--anchor and --direction dimensions differ")
            if not np.linalg.norm(args.direction) > 0:
                raise ValidationError("--direction must be nonzero")
    if args.command == "flow":
        if args.mode == "continuous" and args.T is None:
            raise ValidationError("--mode continuous needs --T")
        if args.mode == "discrete" and args.S is None:
            raise ValidationError("--mode discrete needs --S")
    if args.command == "cover":
        if args.d > 3:
            raise ValidationError("cover supports d <= 3")
        if args.verify_trials < 0:
            raise ValidationError("--verify-trials must be non-negative")
    if args.command in ("check", "visibility") and not (
            os.path.exists(args.grids) or args.grids in ("honeycomb", "identity")):
        raise ValidationError(f"grid spec {args.grids!r} not found")
    if args.command == "experiment" and not os.path.exists(args.manifest):
        raise ValidationError(f"manifest {args.manifest!r} not found")


def resolved_config(args) -> dict:
    if args.format is None:
        args.format = "text" if args.command == "sigma" else "json"
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    if cfg.get("threads") is None:
        cfg["threads"] = _default_threads()
    return cfg


def _emit(args, payload: dict, text: Optional[str] = None):
    if text is None:
        text = dumps(payload)
    if args.out and args.command != "experiment":
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table(d: dict) -> str:
    lines = []
    for k in sorted(d):
        if k == "config":
            continue
        v = d[k]
        lines.append(f"{k}: {json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v}")
    return "\n".join(lines) + "\n"


def _render(args, payload, rows=None, fields=None):
    if args.format == "table":
        return _emit(args, payload, _table(payload))
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fields})
        return _emit(args, payload, buf.getvalue())
    return _emit(args, payload)


def cmd_check(args, cfg):
    forest = load_grid_spec(args.grids)
    budget = args.budget or DEFAULT_BUDGET
    verdict = dense_forest_check(forest.matrices, args.height, args.tol, budget)
    out = verdict.to_dict()
    out["config"] = cfg
    out["grids"] = grid_spec_dict(forest)
    _render(args, out)
    return EXIT_NEGATIVE if verdict.is_forest_obstructed else EXIT_OK


def cmd_visibility(args, cfg):
    forest = load_grid_spec(args.grids)
    budget = args.budget or DEFAULT_CELL_BUDGET
    if args.anchor is not None:
        if len(args.anchor) != forest.n:
            raise ValidationError("query dimension does not match the grids")
        q = SegmentQuery.make(args.anchor, args.direction, args.epsilon[0], args.l_max)
        res = directional_visibility(forest, q, budget)
        out = {"result": res.to_dict(), "config": cfg, "grids": grid_spec_dict(forest),
               "l_max": q.l_max}
        _render(args, out)
        return EXIT_NEGATIVE if res.status == "blocked" else EXIT_OK
    eps = sorted(set(args.epsilon), reverse=True)
    d = forest.n - 1
    if d > 3:
        raise ValidationError("profiles need direction covers, available for n <= 4")
    covers = [build_cap_cover(d, min(args.cover_scale * e, 0.99)) for e in eps]
    anchors = None
    if args.anchors is not None:
        from .forest import anchor_plan, covering_radius
        rho = max(covering_radius(g).value for g in forest.grids)
        anchors = anchor_plan(forest.n, rho, args.anchors)
    prof = visibility_profile(forest, eps, covers, anchors, args.l_max, budget)
    rows = []
    for p in prof:
        rows.append({
            "epsilon": p.epsilon, "V_hat": p.v_hat, "blocked": p.blocked,
            "over_budget": p.over_budget, "certified": p.certified, "queries": p.queries,
            "directions": covers[eps.index(p.epsilon)].count,
            "witness_anchor": None if p.anchor is None else p.anchor.tolist(),
            "witness_direction": None if p.direction is None else p.direction.tolist(),
            "witness_grid": p.grid,
            "witness_coords": None if p.coords is None else list(p.coords),
        })
    out = {"profile": rows, "config": cfg, "grids": grid_spec_dict(forest)}
    _render(args, out, rows, ["epsilon", "V_hat", "blocked", "over_budget", "certified",
                              "queries", "directions", "witness_grid", "witness_coords"])
    if any(p.over_budget for p in prof):
        return EXIT_BUDGET
    return EXIT_NEGATIVE if any(p.blocked for p in prof) else EXIT_OK


def cmd_flow(args, cfg):
    u = parse_direction(args.u, args.dim)
    if args.mode == "fill":
        T = filling_time(u, args.delta)
        out = {"filling_time": None if math.isinf(T) else T, "infinite": math.isinf(T),
               "u": u.tolist(), "delta": args.delta, "config": cfg}
        _render(args, out)
        return EXIT_NEGATIVE if math.isinf(T) else EXIT_OK
    flow = FlowSpec(u, args.delta, T=args.T, S=args.S)
    rep = is_delta_dense(flow, args.mode)
    out = rep.to_dict()
    out.update(u=u.tolist(), mode=args.mode, config=cfg)
    _render(args, out)
    return EXIT_NEGATIVE if rep.certified_not_dense else EXIT_OK


def cmd_cover(args, cfg):
    cover = build_cap_cover(args.d, args.eta)
    if args.verify_trials:
        verify_cover(cover, args.verify_trials, args.seed)
    out = cover.to_dict()
    out["valid"] = None if cover.verified_gap is None else cover.verified_gap < args.eta
    out["config"] = cfg
    rows = [{f"x{i}": x for i, x in enumerate(c)} for c in cover.centres.tolist()]
    _render(args, out, rows, [f"x{i}" for i in range(args.d + 1)])
    return EXIT_OK


def cmd_experiment(args, cfg):
    manifest = load_manifest(args.manifest)
    if args.budget:
        manifest.cell_budget = args.budget
    outdir = args.out or manifest.output_dir
    res = run_experiment(manifest, workers=cfg["threads"], outdir=None)
    summary = dict(res.summary)
    summary["cli_config"] = cfg
    res.summary = summary
    if outdir:
        res.write(outdir)
    if args.format == "csv":
        sys.stdout.write(res.raw_csv())
    else:
        sys.stdout.write(dumps(summary) if args.format == "json" else _table(summary))
    return EXIT_OK


def cmd_sigma(args, cfg):
    val = sigma(args.d, args.k)
    out = {"sigma": val, "d": args.d, "k": args.k, "config": cfg}
    if args.lam is not None:
        out["borel_cantelli"] = borel_cantelli_budget(args.d, args.k, args.lam).to_dict()
    if args.format == "text":
        _emit(args, out, format(val, ".17g") + "\n")
    else:
        _render(args, out)
    return EXIT_OK


COMMANDS = {"check": cmd_check, "visibility": cmd_visibility, "flow": cmd_flow,
            "cover": cmd_cover, "experiment": cmd_experiment, "sigma": cmd_sigma}


def _from_config(path, parser, base):
    with open(path) as fh:
        data = json.load(fh)
    cfg = data.get("config", data)
    if "command" not in cfg:
        cfg = data.get("cli_config", cfg)
    if cfg.get("command") not in COMMANDS:
        raise ValidationError(f"{path} holds no replayable configuration")
    defaults = vars(parser.parse_args([cfg["command"]] + _required_stub(cfg["command"])))
    merged = {**defaults, **cfg}
    merged["out"] = base.out
    merged["config"] = None
    return argparse.Namespace(**merged)


def _required_stub(cmd):
    return {
        "check": ["--grids", "x"], "visibility": ["--grids", "x", "--epsilon", "1"],
        "flow": ["--u", "axis", "--delta", "0.5"], "cover": ["--d", "1", "--eta", "0.5"],
        "experiment": ["--manifest", "x"], "sigma": ["--d", "1", "--k", "2"],
    }[cmd]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        if args.config is not None:
            args = _from_config(args.config, parser, args)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_INVALID
        _validate(args)
        cfg = resolved_config(args)
        return COMMANDS[args.command](args, cfg)
    except BudgetExceeded as e:
        print(f"forestlab: budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValidationError, ForestLabError, ValueError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"forestlab: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
