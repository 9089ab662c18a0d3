"""Command-line front end: ``seirda {run,sweep,twin,refrt,validate}``.

Exit status is 0 on success, 1 on runtime or data errors and 2 on usage
errors. Each command writes into ``<out>/<region>_<command>_<seed>`` and
removes that directory again if the command fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assimilator import build_schedule, run_assimilation
from .config import RunConfig, load_config
from .dataio import NEW_CASES_COLUMN, parse_observations, write_analysis, write_observations, write_table
from .diagnostics import (
    AXES,
    default_axis_values,
    generate_twin,
    parse_axis_values,
    parse_twin_spec,
    removal_rates_from,
    score_twin,
    sweep,
    toyokeizai_rt,
)
from .errors import SeirdaError

log = logging.getLogger("seirda")


class UsageError(Exception):
    """Raised for argument combinations argparse cannot check by itself."""


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _observations(args, cfg: RunConfig):
    obs = parse_observations(args.obs, region=cfg.region)
    return obs


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(args, out: Path) -> None:
    cfg = _config(args)
    obs = _observations(args, cfg)
    run = run_assimilation(cfg, obs, keep_members=False)
    meta = run.metadata()
    meta["observations"] = str(args.obs)
    write_analysis(run.records, out / "analysis.csv", meta)
    log.info("wrote %d daily records to %s", len(run.records), out)


def cmd_sweep(args, out: Path) -> None:
    cfg = _config(args)
    values = parse_axis_values(args.axis, args.values) if args.values else default_axis_values(args.axis)
    if args.spec:
        spec, cfg = _twin(args, cfg)
        twin = generate_twin(spec)
        obs = twin.observations
        rates = (spec.start_date, np.full(spec.length, spec.gamma_H), np.full(spec.length, spec.gamma_D))
        write_observations(obs, out / "twin_observations.csv")
    else:
        obs = _observations(args, cfg)
        window = obs.window(cfg.start_date, cfg.end_date)
        rates = removal_rates_from(window)
    jobs = args.jobs or len(values)
    sweep(cfg, args.axis, obs, values=values, out_dir=out, rates=rates, jobs=jobs)


def _twin(args, cfg):
    text = Path(args.spec).read_text(encoding="utf-8") if args.spec != "default" else ""
    return parse_twin_spec(text, cfg, source=str(args.spec))


def cmd_twin(args, out: Path) -> None:
    spec, cfg = _twin(args, _config(args))
    twin = generate_twin(spec)
    run = run_assimilation(cfg, twin.observations, spec.schedule(cfg.k_ratio, cfg.symptomatic_fraction),
                           keep_members=False)
    burn_in = min(args.burn_in, spec.length - 1)
    score = score_twin(run.records, twin.truth, burn_in=burn_in)

    write_observations(twin.observations, out / "twin_observations.csv")
    truth = twin.truth
    write_table(out / "truth.csv", ["date", "S", "E", "Ia", "Is", "H", "R", "D", "Ra", "Rs", "beta_s", "Rt"],
                ([d] + list(row) + [b, r] for d, row, b, r in
                 zip(truth.dates, truth.compartments.tolist(), truth.beta_s.tolist(), truth.rt.tolist())))
    meta = run.metadata()
    meta["twin"] = {"length": spec.length, "obs_sd": spec.obs_sd, "noise_seed": spec.seed,
                    "gamma_H": spec.gamma_H, "gamma_D": spec.gamma_D,
                    "initial": dict(zip(("S", "E", "Ia", "Is", "H", "R", "D", "Ra", "Rs"),
                                        spec.initial.as_array().tolist()))}
    write_analysis(run.records, out / "analysis.csv", meta)
    report = score.to_dict()
    report["seed"] = cfg.seed
    report["config"] = cfg.to_dict()
    _write_json(out / "score.json", report)
    log.info("beta_s within 10%% on %.0f%% of days; Rt 95%% coverage %.0f%%",
             100 * score.beta_within_10pct, 100 * score.rt_coverage95)


def cmd_refrt(args, out: Path) -> None:
    obs = parse_observations(args.obs)
    if obs.new_cases is None:
        raise SeirdaError(f"{args.obs}: column {NEW_CASES_COLUMN!r} is required for the reference Rt")
    rt = toyokeizai_rt(obs.new_cases)
    write_table(out / "reference_rt.csv", ["date", "Rt"], zip(obs.dates, rt.tolist()))
    cfg = _config(args)
    _write_json(out / "reference_rt.meta.json", {
        "seed": cfg.seed, "config": cfg.to_dict(), "observations": str(args.obs),
        "formula": "(sum of last 7 days / sum of previous 7 days) ** (5/7)", "missing_marker": "NA",
    })


def cmd_validate(args) -> None:
    cfg = _config(args)
    print(f"config ok: region {cfg.region}, population {cfg.population}, seed {cfg.seed}")
    if not args.obs:
        return
    obs = _observations(args, cfg)
    print(f"observations ok: {len(obs)} days {obs.start_date}..{obs.end_date}, "
          f"{len(obs.missing)} missing, {len(obs.corrections)} corrected")
    window = obs.window(cfg.start_date, cfg.end_date)
    build_schedule(cfg, window)
    if cfg.population is None:
        raise SeirdaError("population is not set; a run needs it")
    if not np.all(window.values_on(window.start_date) > 0):
        raise SeirdaError(f"first day {window.start_date} needs positive H, R and D for the spin-up")
    print("ready to run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seirda", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or preset name (tokyo, osaka, ...)")
    common.add_argument("--seed", type=int, help="override the random seed")
    common.add_argument("--verbose", "-v", action="count", default=0)
    outdir = argparse.ArgumentParser(add_help=False)
    outdir.add_argument("--out", required=True, type=Path, help="parent output directory")
    outdir.add_argument("--force", action="store_true", help="replace an existing run directory")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common, outdir], help="assimilate an observation CSV")
    p.add_argument("--obs", required=True, type=Path)

    p = sub.add_parser("sweep", parents=[common, outdir], help="rerun over one parameter axis")
    p.add_argument("--axis", required=True, choices=sorted(AXES))
    p.add_argument("--values", help="comma-separated values (sd accepts log1.3)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--obs", type=Path)
    src.add_argument("--spec", help="twin description file, or 'default'")
    p.add_argument("--jobs", type=int, help="parallel runs (default: one per value)")

    p = sub.add_parser("twin", parents=[common, outdir], help="synthetic-truth experiment")
    p.add_argument("--spec", default="default", help="twin description file, or 'default'")
    p.add_argument("--burn-in", type=int, default=60)

    p = sub.add_parser("refrt", parents=[common, outdir], help="week-over-week reference Rt")
    p.add_argument("--obs", required=True, type=Path)

    p = sub.add_parser("validate", parents=[common], help="check a config and CSV without running")
    p.add_argument("--obs", type=Path)
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "twin": cmd_twin, "refrt": cmd_refrt}


def _run_dir(args) -> Path:
    cfg = _config(args)
    region = cfg.region
    if args.command == "refrt":
        region = Path(args.obs).stem
    elif args.command == "twin" or getattr(args, "spec", None):
        region = "twin"
    return args.out / f"{region}_{args.command}_{cfg.seed}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        parser.error("--jobs must be >= 1")

    if args.command == "validate":
        try:
            cmd_validate(args)
        except (SeirdaError, OSError) as exc:
            print(f"seirda: error: {exc}", file=sys.stderr)
            return 1
        return 0

    out = None
    created = False
    try:
        out = _run_dir(args)
        if out.exists():
            if not args.force:
                raise SeirdaError(f"{out} already exists; pass --force to replace it")
            shutil.rmtree(out)
        out.mkdir(parents=True)
        created = True
        COMMANDS[args.command](args, out)
    except (SeirdaError, OSError, ValueError) as exc:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        print(f"seirda: error: {_one_line(exc)}", file=sys.stderr)
        return 1
    print(out)
    return 0


def _one_line(exc: BaseException) -> str:
    text = str(exc) or type(exc).__name__
    return " ".join(text.split())


if __name__ == "__main__":
    sys.exit(main())
