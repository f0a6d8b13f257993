"""Command-line entry point: ``damage-prognosis <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

from . import pipeline, report
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .paris import CrackGrowthDivergence

log = logging.getLogger("damage_prognosis")

EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_NUMERICAL = 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config (defaults if omitted)")
    p.add_argument("--out", type=Path, help="artifact directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="damage-prognosis", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate truth, high- and low-fidelity curves")
    _common(p)
    p = sub.add_parser("fit", help="fit the fPCA basis and Gaussian prior")
    _common(p)
    p = sub.add_parser("monitor", help="error records per checkpoint and the allocation decision")
    _common(p)
    p.add_argument("--decision-step", type=int)
    p = sub.add_parser("update-evaluate", help="update with each candidate and score on the second population")
    _common(p)
    p.add_argument("--decision-step", type=int)
    p.add_argument("--force-candidate", help="structure id to treat as the informed choice")
    p = sub.add_parser("reproduce-paper", help="run every stage and write report.json")
    _common(p)
    p.add_argument("--decision-step", type=int)
    p.add_argument("--force-candidate")
    p.add_argument("--n-seeds", type=int, default=1,
                   help="repeat over this many consecutive master seeds for the multi-seed checks")
    p.add_argument("--skip-determinism", action="store_true",
                   help="do not re-run the default seed to compare CSV payloads")
    p.add_argument("--skip-diagnostics", action="store_true",
                   help="skip the sampler calibration and gradient checks")

    cfg = sub.add_parser("config", help="config utilities")
    cfg_sub = cfg.add_subparsers(dest="config_command", required=True)
    init = cfg_sub.add_parser("init", help="write the default config")
    init.add_argument("path", nargs="?", type=Path, help="destination (stdout if omitted)")
    init.add_argument("--force", action="store_true", help="overwrite an existing file")
    return parser


def resolve_config(args) -> tuple[ExperimentConfig, Path]:
    config = load_config(args.config)
    doc = config.model_dump(mode="json")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["output_dir"] = str(args.out)
    if getattr(args, "decision_step", None) is not None:
        doc["monitor"]["decision_step"] = args.decision_step
    config = load_config_from_doc(doc)
    # record the resolved grid extent so later commands reuse it verbatim
    if config.grid.n_cycles_max is None:
        doc["grid"]["n_cycles_max"] = pipeline.resolve_n_cycles_max(config)
        config = load_config_from_doc(doc)
    return config, Path(config.output_dir)


def load_config_from_doc(doc: dict) -> ExperimentConfig:
    from pydantic import ValidationError

    from .config import format_validation_error

    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as err:
        raise ConfigError(format_validation_error(err, "<command line>")) from None


def _write_run_config(config: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(config))


def cmd_simulate(config, out):
    pops = pipeline.simulate(config)
    _write_run_config(config, out)
    paths = pipeline.save_populations(out, pops)
    log.info("wrote %d curve files to %s", len(paths), out / "curves")
    return pops


def cmd_fit(config, out):
    pops = pipeline.load_populations(out)
    fitted = pipeline.fit(config, pops)
    path = pipeline.save_fit(out, fitted)
    log.info("K=%d (explained %.6f); model written to %s",
             fitted.model.K, fitted.model.explained_fraction, path)
    return fitted


def cmd_monitor(config, out):
    pops = pipeline.load_populations(out)
    model, prior = pipeline.load_fit(out)
    mon = pipeline.monitor(config, pops, model, prior)
    pipeline.save_monitor(out, mon)
    print(json.dumps(mon.decision.to_dict(), indent=2))
    return mon


def cmd_update_evaluate(config, out, force_candidate=None):
    pops = pipeline.load_populations(out)
    model, prior = pipeline.load_fit(out)
    decision, points = pipeline.load_monitor_outputs(out)
    if decision.decision_step != config.monitor.decision_step:
        raise ValueError(
            f"monitor outputs were made at M={decision.decision_step}, "
            f"config asks for M={config.monitor.decision_step}; re-run `monitor`"
        )
    informed = force_candidate or decision.selected_structure_id
    upd = pipeline.update_and_evaluate(config, pops, model, prior, points, informed)
    pipeline.save_update(out, upd)
    log.info("evaluated %d model variants; informed choice %s", len(upd.variants), informed)
    return upd


def run_all(config: ExperimentConfig, out: Path, force_candidate=None) -> pipeline.ExperimentResult:
    result = pipeline.run_experiment(config, force_candidate)
    _write_run_config(config, out)
    pipeline.save_populations(out, result.populations)
    pipeline.save_fit(out, result.fit)
    pipeline.save_monitor(out, result.monitor)
    pipeline.save_update(out, result.update)
    return result


def cmd_reproduce(config, out, args):
    results = [run_all(config, out, args.force_candidate)]
    for k in range(1, args.n_seeds):
        extra = config.model_copy(update={"seed": config.seed + k})
        results.append(pipeline.run_experiment(extra, args.force_candidate))
        log.info("seed %d done", config.seed + k)
    determinism = None
    if not args.skip_determinism:
        with tempfile.TemporaryDirectory() as tmp:
            run_all(config, Path(tmp), args.force_candidate)
            same, diffs = report.compare_artifacts(out, Path(tmp))
        determinism = report.Criterion("determinism", same, {"differing_files": diffs})
    doc = report.build_report(results, determinism, diagnostics=not args.skip_diagnostics)
    path = report.write_report(doc, out / "report.json")
    for c in doc["criteria"]:
        print(f"{c['status'].upper():>13}  {c['criterion']}")
    print(f"report: {path}")
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "config":
            text = dump_config(ExperimentConfig())
            if args.path is None:
                sys.stdout.write(text)
            elif args.path.exists() and not args.force:
                raise FileExistsError(f"{args.path} exists (use --force)")
            else:
                args.path.write_text(text)
            return 0
        config, out = resolve_config(args)
        if args.command == "simulate":
            cmd_simulate(config, out)
        elif args.command == "fit":
            cmd_fit(config, out)
        elif args.command == "monitor":
            cmd_monitor(config, out)
        elif args.command == "update-evaluate":
            cmd_update_evaluate(config, out, args.force_candidate)
        elif args.command == "reproduce-paper":
            cmd_reproduce(config, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, FileExistsError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (CrackGrowthDivergence, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
