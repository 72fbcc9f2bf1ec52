"""
Main entry point for the data-mixture optimizer.

Sub-commands:
- run       one BO run from a config file into a run directory
- replay    re-execute a run against its recorded losses and compare
- report    CSV reports (regret, best loss, mixing ratio) and a summary
- validate  statistical validation suites
- ablate    desk-scale ablations over seeds

Exit codes: 0 success, 1 configuration or input error, 2 evaluator failure,
3 numerical breakdown, 4 replay mismatch, 5 validation suite failed.
"""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from config import (
    CliConfigFile,
    load_config,
    load_domains,
    resolve_output_dir,
    resolved_payload,
    with_overrides,
)
from errors import EvaluatorFailure, InsufficientData, MixOptError, NumericalBreakdown, SingularHessian, UnknownOptimum
from experiments.ablations import Ablation, run_ablation
from experiments.suites import SUITE_NAMES, Suite, run_suite
from graph.engine import optimum_for, replay_history, run_to_completion
from graph.state import EstimatorKind
from rundir import (
    CONFIG_FILE,
    REPORT_DIR,
    RESULT_FILE,
    read_json,
    read_observations,
    write_json,
)
from tools.evaluators import build_evaluator
from tools.regret import compute_trace, write_trace_csv

logger = logging.getLogger("mixopt")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EVALUATOR = 2
EXIT_NUMERICAL = 3
EXIT_REPLAY_MISMATCH = 4
EXIT_VALIDATION_FAILED = 5

TEMPLATE_PATH = Path(__file__).parent / "templates" / "report_summary.txt"


def parse_arguments(argv: Optional[List[str]] = None):
    """
    Parse command-line arguments.

    Returns:
        Parsed arguments with the chosen sub-command in `command`
    """
    parser = argparse.ArgumentParser(
        description="Data-mixture optimizer - Bayesian optimization of training data mixtures from task feedback",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py run --config configs/quadratic.json
  python main.py run --config configs/quadratic.json --k 4 --iterations 20
  python main.py replay runs/quadratic
  python main.py report runs/quadratic
  python main.py validate order_stats
  python main.py ablate sampling_size --config configs/quadratic.json --seeds 20
        """
    )
    parser.add_argument("--quiet", "-q", action="store_true", help="Only log warnings and hide progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run the optimizer")
    run.add_argument("--config", "-c", required=True, help="Run config JSON")
    run.add_argument("--seed-override", type=int, default=None, help="Replace the configured seed")
    run.add_argument("--output-dir", "-o", default=None, help="Run directory (default: config output_dir)")
    run.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default=None,
                     help="Inner estimator")
    run.add_argument("--k", type=int, default=None, help="Sampling size k")
    run.add_argument("--iterations", type=int, default=None, help="Number of BO iterations T")
    run.add_argument("--beta", type=float, default=None, help="LCB exploration weight")

    replay = sub.add_parser("replay", help="Replay a run against its recorded losses")
    replay.add_argument("run_dir", help="Run directory")

    report = sub.add_parser("report", help="Write CSV reports for a run")
    report.add_argument("run_dir", help="Run directory")

    validate = sub.add_parser("validate", help="Run a statistical validation suite")
    validate.add_argument("suite", choices=SUITE_NAMES, help="Suite to run")
    validate.add_argument("--seed", type=int, default=0, help="Suite seed")

    ablate = sub.add_parser("ablate", help="Run an ablation over seeds")
    ablate.add_argument("which", choices=[a.value for a in Ablation], help="Ablation to run")
    ablate.add_argument("--config", "-c", required=True, help="Run config JSON (domains and evaluator)")
    ablate.add_argument("--seeds", type=int, default=10, help="Number of seeds per variant")
    ablate.add_argument("--output-dir", "-o", default=None, help="Where to write the CSVs")

    return parser.parse_args(argv)


def setup_logging(quiet: bool = False) -> None:
    level = logging.WARNING if quiet else os.getenv("MIXOPT_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, EvaluatorFailure):
        return EXIT_EVALUATOR
    if isinstance(error, (NumericalBreakdown, SingularHessian, InsufficientData)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _overrides(args) -> Dict[str, Any]:
    return {
        "seed": args.seed_override,
        "estimator_kind": args.estimator,
        "sampling_size": args.k,
        "iterations": args.iterations,
        "beta": args.beta,
    }


def cmd_run(args) -> int:
    cfg = with_overrides(load_config(args.config), _overrides(args))
    domains = load_domains(cfg)
    run_dir = resolve_output_dir(cfg, args.output_dir)
    evaluator = build_evaluator(cfg.evaluator, domains, manifest_dir=run_dir, base_dir=Path(cfg.base_dir or "."))
    write_json(run_dir, CONFIG_FILE, resolved_payload(cfg, run_dir))
    try:
        state = run_to_completion(cfg.run, domains, evaluator, run_dir=run_dir)
    finally:
        evaluator.close()
    best = state["best"]
    print(f"Best loss {best.loss:.6f} at iteration {best.iteration}")
    print(f"Best ratio {list(best.manifest.target_ratio.weights)}")
    print(f"Run directory: {run_dir.resolve()}")
    return EXIT_OK


def _load_run_config(run_dir: Path) -> CliConfigFile:
    return CliConfigFile.model_validate(read_json(run_dir, CONFIG_FILE))


def cmd_replay(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = _load_run_config(run_dir)
    domains = load_domains(cfg)
    report = replay_history(cfg.run, domains, read_observations(run_dir))
    if report.identical:
        print(f"Replay identical: {report.replayed} observations")
        return EXIT_OK
    print(f"Replay MISMATCH: {report.message}")
    return EXIT_REPLAY_MISMATCH


def _write_csv(path: Path, header: List[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = _load_run_config(run_dir)
    history = read_observations(run_dir)
    result = read_json(run_dir, RESULT_FILE)
    report_dir = run_dir / REPORT_DIR
    sign = -1.0 if cfg.run.maximize else 1.0

    best_so_far = []
    best = float("inf")
    for t, obs in enumerate(history):
        best = min(best, obs.loss)
        best_so_far.append([t, obs.iteration, repr(obs.loss), repr(best), repr(sign * best)])
    _write_csv(report_dir / "best_loss.csv", ["t", "iteration", "loss", "best_loss", "best_feedback"], best_so_far)

    names = [d.name for d in cfg.domains]
    ratio_rows = list(zip(names, result["best_ratio"], result["best_realised_ratio"], result["final_ratio"]))
    _write_csv(report_dir / "mixing_ratio.csv", ["domain", "best_ratio", "realised_ratio", "final_ratio"],
               [[n, repr(b), repr(r), repr(f)] for n, b, r, f in ratio_rows])

    # only the evaluator's f* is needed; external children are spawned lazily and never here
    domains = load_domains(cfg)
    evaluator = build_evaluator(cfg.evaluator, domains, base_dir=Path(cfg.base_dir or "."))
    try:
        f_star = optimum_for(cfg.run, evaluator)
    except UnknownOptimum as e:
        logger.warning("[REPORT] %s", e)
        f_star = None
    evaluator.close()
    if f_star is None:
        logger.warning("[REPORT] evaluator has no known optimum; regret trace skipped")
        regret_section = "Regret is unavailable: the evaluator does not expose its optimum."
    else:
        trace = compute_trace(history, f_star)
        write_trace_csv(trace, report_dir / "regret.csv")
        regret_section = (f"Final average regret {trace.average[-1]:.6f}, "
                          f"cumulative {trace.cumulative[-1]:.6f} (f* = {f_star})")

    template = TEMPLATE_PATH.read_text(encoding="utf-8")
    summary = template.format(
        run_dir=run_dir,
        n_domains=len(names),
        domain_names=", ".join(names),
        estimator=cfg.run.estimator_kind.value,
        sampling_size=cfg.run.sampling_size,
        mixture_size=cfg.run.mixture_size,
        iterations=result["iterations"],
        beta=cfg.run.beta,
        seed=cfg.run.seed,
        feedback_name="feedback" if cfg.run.maximize else "loss",
        best_feedback=result["best_feedback"],
        best_iteration=result["best_iteration"],
        best_digest=result["best_manifest"]["digest"],
        ratio_rows="\n".join(f"| {n} | {b:.4f} | {r:.4f} | {f:.4f} |" for n, b, r, f in ratio_rows),
        regret_section=regret_section,
    )
    (report_dir / "summary.md").write_text(summary, encoding="utf-8")
    logger.info("[REPORT] written to %s", report_dir)
    print(f"Report written to: {report_dir.resolve()}")
    return EXIT_OK


def cmd_validate(args) -> int:
    result = run_suite(Suite(args.suite), seed=args.seed, quiet=args.quiet)
    print(f"Suite {result.suite.value}: {'PASS' if result.passed else 'FAIL'}")
    for name, value in result.statistics.items():
        print(f"  {name}: {value:.6g}")
    for failure in result.failures:
        print(f"  failure: {failure}")
    return EXIT_OK if result.passed else EXIT_VALIDATION_FAILED


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    domains = load_domains(cfg)
    output_dir = Path(args.output_dir) if args.output_dir else resolve_output_dir(cfg) / "ablations"
    evaluator = build_evaluator(cfg.evaluator, domains, manifest_dir=output_dir / "manifests",
                                base_dir=Path(cfg.base_dir or "."))
    try:
        summaries = run_ablation(Ablation(args.which), cfg.run, domains, evaluator, output_dir,
                                 n_seeds=args.seeds, quiet=args.quiet)
    finally:
        evaluator.close()
    for s in summaries:
        print(f"{s.variant:<20} mean {s.mean:.6f}  std {s.std:.6f}  ({s.runs} runs)")
    print(f"CSVs written to: {output_dir.resolve()}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "replay": cmd_replay,
    "report": cmd_report,
    "validate": cmd_validate,
    "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parses arguments, runs the sub-command, and maps failures to exit codes.
    """
    load_dotenv()
    args = parse_arguments(argv)
    setup_logging(args.quiet)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as e:
        print(f"Error: invalid configuration\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except MixOptError as e:
        code = exit_code_for(e)
        print(f"Error ({type(e).__name__}): {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
