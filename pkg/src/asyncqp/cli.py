"""Command line entry point: ``asyncqp {generate,plan,run,plot}``.

Exit codes: 0 success, 2 configuration error, 3 planner infeasibility,
4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment, io, planner
from .config import ConfigError, load_config
from .problem_gen import generate_problem
from .qp_model import ProblemError, SpectralInfo

log = logging.getLogger("asyncqp")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4


def _config(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_generate(args) -> int:
    cfg = _config(args)
    if cfg.gen is None:
        raise ConfigError("generate needs problem.generate in the config")
    gen = cfg.gen
    if args.seed is not None:
        gen = replace(gen, seed=args.seed)
    problem = generate_problem(gen)
    out = Path(args.out or "problem.json")
    meta = {"norm2": gen.norm2, "cond": gen.cond, "spectrum": gen.spectrum, "r_norm": gen.r_norm, "seed": gen.seed}
    io.write_problem(out, problem, meta)
    print(f"wrote={out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    if args.norm2 is not None or args.cond is not None:
        if args.norm2 is None or args.cond is None:
            raise ConfigError("--norm2 and --cond go together")
        info = SpectralInfo(args.norm2, args.norm2 / args.cond, args.cond, is_upper_bound=True)
        norm_r = args.norm_r if args.norm_r is not None else float("nan")
        if (args.epsilon is None) != (args.k_d is None):
            raise ConfigError("--epsilon and --k-d go together")
        if args.epsilon is not None and args.norm_r is None:
            raise ConfigError("regularization planning needs --norm-r")
        p = planner.make_plan(info, norm_r, args.epsilon, args.k_d)
        print("\n".join(p.lines()))
        return EXIT_OK
    cfg = _config(args)
    for name, p in experiment.plan(cfg):
        print(f"run={name}")
        print("\n".join(p.lines()))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    out_dir = Path(args.out) if args.out else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = experiment.load_problem(cfg)
    curves = []
    for index, run in enumerate(cfg.runs):
        res = experiment.execute_run(cfg, problem, run, index)
        csv_path = out_dir / f"{run.name}.csv"
        io.write_trace(csv_path, res.trace)
        if cfg.events and res.trace.events is not None:
            io.write_events(out_dir / f"{run.name}_events.csv", res.trace.events)
        (out_dir / f"{run.name}_summary.json").write_text(json.dumps(_jsonable(res.summary), indent=1) + "\n")
        for key, value in res.summary.items():
            print(f"{key}={experiment.format_value(value)}")
        print(f"trace={csv_path}")
        curves.append((run.name, {"k": np.arange(res.trace.horizon + 1), "dist2": res.trace.dist2,
                                  "dist_blockmax": res.trace.dist_blockmax}))
    if cfg.plot:
        from .plotting import save_convergence_plot

        path = save_convergence_plot(out_dir / cfg.plot, curves, cfg.epsilon_line)
        print(f"plot={path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    labels = args.labels.split(",") if args.labels else [Path(t).stem for t in args.traces]
    if len(labels) != len(args.traces):
        raise ConfigError("--labels must name every trace")
    curves = [(label, io.read_trace(path)) for label, path in zip(labels, args.traces)]
    from .plotting import save_convergence_plot

    path = save_convergence_plot(args.out or "convergence.svg", curves, args.epsilon, args.metric)
    print(f"plot={path}")
    return EXIT_OK


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asyncqp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path")

    p = sub.add_parser("generate", help="write a random problem file")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("plan", help="print stepsize and regularization intervals")
    common(p)
    p.add_argument("--norm2", type=float, help="||Q||_2 or an upper bound (skips --config)")
    p.add_argument("--cond", type=float, help="k_Q or an upper bound")
    p.add_argument("--norm-r", type=float, help="||r||_2")
    p.add_argument("--epsilon", type=float, help="regularization error target")
    p.add_argument("--k-d", type=float, help="target condition number")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="simulate every configured run, write CSV traces")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="plot trace CSVs")
    p.add_argument("traces", nargs="+")
    p.add_argument("--epsilon", type=float, help="draw a horizontal reference line")
    p.add_argument("--labels", help="comma-separated legend labels")
    p.add_argument("--metric", choices=("dist2", "dist_blockmax"), default="dist2")
    p.add_argument("--out", help="image path (.svg by default)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except planner.InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ProblemError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, io.TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
