"""Command-line entry point: ``collect``, ``fit``, ``simulate``, ``benchmark``, ``bo``.

Every subcommand resolves a full configuration (packaged defaults, then the
``--config`` file, then flags), writes only under the output directory and
embeds the resolved configuration in its JSON output.  Failures print one JSON
object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import dump_json, load_gp, save_gp, with_provenance, write_rows
from .bo import BOState, Region, bo_loop, collect_dataset, learning_curve_csv
from .config import CONTROLLERS, ConfigError, RunConfig, load_config
from .gp import ForceDataset, NotPositiveDefiniteError, fit_dataset, grid_search, kernel_from_config
from .simulator import benchmark_grid, run_scenario, swap_scenario, write_trace_csv

log = logging.getLogger("lingp_mpc")

GP_CONTROLLERS = ("linmpc-lingp", "mpc-lingp", "mpc-fullgp")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config layered over the defaults")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    common.add_argument("--no-timing", action="store_true",
                        help="write zeros instead of wall-clock timings (byte-reproducible)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="lingp-mpc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("collect", parents=[common], help="fly random-target passes, write forces.csv")
    c.add_argument("--passes", type=int)
    c.add_argument("--noise", type=float, help="measurement noise std (N)")

    f = sub.add_parser("fit", parents=[common], help="fit the force GP, write gp.json")
    f.add_argument("--data", type=Path, help="force CSV (default OUT/forces.csv)")

    s = sub.add_parser("simulate", parents=[common], help="run one swap scenario")
    s.add_argument("--controller", choices=CONTROLLERS, default="linmpc-lingp")
    s.add_argument("--dd", type=float, help="height separation (m)")
    s.add_argument("--gp", type=Path, help="GP artifact (default OUT/gp.json)")

    b = sub.add_parser("benchmark", parents=[common], help="controller x dd grid")
    b.add_argument("--gp", type=Path, help="GP artifact (default OUT/gp.json)")
    b.add_argument("--controllers", help="comma-separated controller names")
    b.add_argument("--seeds", type=int)
    b.add_argument("--workers", type=int, default=1)

    o = sub.add_parser("bo", parents=[common], help="BO-guided data collection")
    o.add_argument("--episodes", type=int)
    o.add_argument("--strategy", choices=("ucb", "random"), default="ucb")
    o.add_argument("--resume", action="store_true", help="continue from OUT/bo_state.json")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    top = {}
    if args.seed is not None:
        top["seed"] = args.seed
    if args.out is not None:
        top["output_dir"] = str(args.out)
    if args.no_timing:
        top["record_timing"] = False
    return cfg.replace(**top) if top else cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gp_path(args, out: Path) -> Path:
    return args.gp if args.gp is not None else out / "gp.json"


def _require_gp(path: Path):
    if not path.exists():
        raise MissingArtifactError(f"GP artifact not found: {path} (run `fit` first)")
    return load_gp(path)


def cmd_collect(args, cfg: RunConfig) -> dict:
    if args.passes is not None:
        cfg = cfg.override("collect", passes=args.passes)
    if args.noise is not None:
        cfg = cfg.override("collect", noise_std=args.noise)
    out = _out_dir(cfg)
    data = collect_dataset(cfg)
    data.to_csv(out / "forces.csv")
    summary = {"samples": len(data), "passes": cfg.collect.passes, "files": ["forces.csv"]}
    dump_json(with_provenance(summary, cfg, "collect"), out / "collect.json")
    return summary


def cmd_fit(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    path = args.data if args.data is not None else out / "forces.csv"
    if not path.exists():
        raise MissingArtifactError(f"force dataset not found: {path} (run `collect` first)")
    data = ForceDataset.from_csv(path)
    if len(data) == 0:
        raise ValueError(f"{path} holds no samples")
    kernel = kernel_from_config(cfg.gp)
    noise_var = cfg.gp.noise_std**2
    if cfg.gp.grid_search:
        kernel = grid_search(data, kernel, noise_var)
    gp = fit_dataset(data, kernel, noise_var)
    save_gp(gp, cfg, out / "gp.json")
    X = Region.from_config(cfg.bo).grid(cfg.bo.grid_resolution)
    mu, var = gp.predict(X)
    write_rows(out / "gp_surface.csv", ("dx", "dy", "dz", "fz_mean", "fz_std"),
               np.column_stack([X, mu, np.sqrt(var)]))
    train_rmse = float(np.sqrt(np.mean((gp.predict_mean(data.X) - data.y) ** 2)))
    return {"samples": len(data), "train_rmse": train_rmse,
            "files": ["gp.json", "gp_surface.csv"]}


def cmd_simulate(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    dd = cfg.scenario.dd if args.dd is None else args.dd
    gp = _require_gp(_gp_path(args, out)) if args.controller in GP_CONTROLLERS else None
    scenario = swap_scenario(dd, cfg, args.controller, seed=0)
    res = run_scenario(scenario, cfg, gp)
    stem = f"simulate_{args.controller}_dd{dd:g}"
    files = [f"{stem}.json"]
    for i in range(scenario.n_drones):
        name = f"{stem}_drone{i}.csv"
        write_trace_csv(res, i, out / name)
        files.append(name)
    summary = {"controller": args.controller, "dd": dd, "lower_drone": scenario.lower,
               **res.summary, "files": files}
    dump_json(with_provenance(summary, cfg, "simulate"), out / f"{stem}.json")
    return summary


def cmd_benchmark(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    controllers = (cfg.benchmark.controllers if args.controllers is None
                   else tuple(c for c in args.controllers.split(",") if c))
    for c in controllers:
        if c not in CONTROLLERS:
            raise UsageError(f"unknown controller {c!r}")
    gp = None
    if any(c in GP_CONTROLLERS for c in controllers):
        gp = _require_gp(_gp_path(args, out))
    table = benchmark_grid(cfg, gp, controllers, seeds=args.seeds, workers=args.workers)
    (out / "benchmark.csv").write_text(table.to_csv())
    (out / "benchmark.txt").write_text(table.format() + "\n")
    dump_json(with_provenance(table.to_dict(), cfg, "benchmark"), out / "benchmark.json")
    return {"cells": len(controllers) * len(table.dd_list),
            "files": ["benchmark.csv", "benchmark.txt", "benchmark.json"]}


def cmd_bo(args, cfg: RunConfig) -> dict:
    if args.episodes is not None:
        cfg = cfg.override("bo", episodes=args.episodes)
    out = _out_dir(cfg)
    ckpt = out / "bo_state.json"
    state = None
    if args.resume:
        if not ckpt.exists():
            raise MissingArtifactError(f"no checkpoint to resume: {ckpt}")
        state = BOState.load(ckpt)
    result = bo_loop(cfg, strategy=args.strategy, state=state, checkpoint=ckpt)
    (out / "learning_curve.csv").write_text(learning_curve_csv(result.state))
    files = ["bo_state.json", "learning_curve.csv", "bo.json"]
    if len(result.state.force):
        save_gp(result.gp_force, cfg, out / "gp.json")
        files.append("gp.json")
    J = [row[1] for row in result.state.curve]
    summary = {"strategy": args.strategy, "episodes": len(J), "final_J": J[-1],
               "force_samples": len(result.state.force), "files": files}
    dump_json(with_provenance(summary, cfg, "bo"), out / "bo.json")
    return summary


COMMANDS = {"collect": cmd_collect, "fit": cmd_fit, "simulate": cmd_simulate,
            "benchmark": cmd_benchmark, "bo": cmd_bo}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        summary = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_USAGE)
    except (MissingArtifactError, FileNotFoundError) as exc:
        return _fail("missing_artifact", str(exc), EXIT_FAILURE)
    except NotPositiveDefiniteError as exc:
        return _fail("not_positive_definite", str(exc), EXIT_FAILURE)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)
    sys.stdout.write(json.dumps({"command": args.command, **summary}, sort_keys=True) + "\n")
    return 0


def main_exit() -> None:
    """Console-script entry point."""
    raise SystemExit(main())


if __name__ == "__main__":
    main_exit()
