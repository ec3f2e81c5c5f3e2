from .config_handler import ConfigHandler, RunConfig
from .logger import setup_logging
from .exceptions import ConfigError, DataError, PhysEInvError
import argparse
import csv
import json
import logging
import signal
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = "config/config.yaml"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# Keep track if shutdown is initiated
_shutdown_initiated = False


def handle_signal(signum, frame):
    """Handles termination signals gracefully."""
    global _shutdown_initiated
    if not _shutdown_initiated:
        _shutdown_initiated = True
        logger.info(f"Received signal {signum}. Stopping...")
        sys.exit(128 + signum)
    else:
        logger.warning("Shutdown already in progress.")


class CliParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


TOGGLES = {"on": (True,), "off": (False,), "both": (True, False)}


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    """Flags that override config keys; dest names are the config keys."""
    parser.add_argument("--config", help=f"JSON or YAML config file (default {DEFAULT_CONFIG_PATH} if present)")
    parser.add_argument("--data", dest="data_path", help="CSV series with header date,rho_s,sic,albedo")
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--seed", type=int, dest="seed")
    parser.add_argument("--epochs", type=int, dest="epochs")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--lr", type=float, dest="learning_rate")
    parser.add_argument("--split", type=float, dest="split_fraction")
    parser.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    parser.add_argument("--lambda-pe", type=float, dest="lambda_pe")
    parser.add_argument("--lambda-cl", type=float, dest="lambda_cl")
    parser.add_argument("--tau", type=float, dest="tau")
    parser.add_argument("--cl-variant", dest="cl_variant", choices=["nt_xent", "stability"])
    parser.add_argument("--hidden-size", type=int, dest="hidden_size")
    parser.add_argument("--num-heads", type=int, dest="num_heads")
    parser.add_argument("--synth-length", type=int, dest="synth_length")
    parser.add_argument("--data-seed", type=int, dest="data_seed")
    parser.add_argument("--bins", type=int, dest="histogram_bins")


def _add_logging_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--log-level", dest="log_level")
    parser.add_argument("--log-file", dest="log_file")
    parser.add_argument("--log-format", dest="log_format", choices=["text", "json"])


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="physe-inv", description="Physics-encoded inverse modelling of snow depth over sea ice")
    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=CliParser)
    commands.required = True

    synth = commands.add_parser("synth", help="write a synthetic daily series as CSV")
    synth.add_argument("--length", type=int, dest="synth_length")
    synth.add_argument("--seed", type=int, dest="data_seed")
    synth.add_argument("--noise-scale", type=float, dest="synth_noise_scale")
    synth.add_argument("--out", required=True)
    _add_logging_options(synth)

    train = commands.add_parser("train", help="train one model and write its artifacts")
    _add_run_options(train)
    train.add_argument("--model", dest="model", choices=["physe-inv", "lstm", "bilstm"])
    train.add_argument("--pe", dest="pe", action=argparse.BooleanOptionalAction, default=None)
    train.add_argument("--scl", dest="scl", action=argparse.BooleanOptionalAction, default=None)
    _add_logging_options(train)

    evaluate = commands.add_parser("eval", help="evaluate a saved checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--portion", choices=["test", "all"], default="test")
    evaluate.add_argument("--config")
    evaluate.add_argument("--data", dest="data_path")
    evaluate.add_argument("--out-dir", dest="out_dir")
    _add_logging_options(evaluate)

    ablate = commands.add_parser("ablate", help="run the split x contrastive x estimation ablation grid")
    _add_run_options(ablate)
    ablate.add_argument("--splits", type=_floats, default=[0.8, 0.6, 0.5])
    ablate.add_argument("--scl", choices=sorted(TOGGLES), default="both", dest="scl_grid")
    ablate.add_argument("--pe", choices=sorted(TOGGLES), default="both", dest="pe_grid")
    ablate.add_argument("--seeds", type=int, default=1, dest="seed_count",
                        help="number of seeds, counting up from the configured seed")
    ablate.add_argument("--models", type=_names, default=None)
    ablate.add_argument("--cl-variants", type=_names, default=None)
    ablate.add_argument("--workers", type=int, dest="workers")
    _add_logging_options(ablate)

    gradcheck = commands.add_parser("gradcheck", help="finite-difference check of every operation and the model")
    gradcheck.add_argument("--tolerance", type=float, default=1e-3)
    gradcheck.add_argument("--op", action="append", type=_names, default=None,
                           help="restrict to these checks (repeatable or comma-separated)")
    gradcheck.add_argument("--seeds", type=int, default=50)
    gradcheck.add_argument("--eps", type=float, default=1e-4)
    _add_logging_options(gradcheck)

    physics = commands.add_parser("physics", help="hydrostatic balance demonstrations")
    physics_commands = physics.add_subparsers(dest="physics_command", metavar="demo", parser_class=CliParser)
    physics_commands.required = True

    forward = physics_commands.add_parser("forward", help="ice thickness from snow depth and freeboard")
    forward.add_argument("--hs", type=float, required=True)
    forward.add_argument("--fb", type=float, required=True)
    forward.add_argument("--rhos", type=float, required=True)

    residual = physics_commands.add_parser("residual", help="hydrostatic balance residual")
    residual.add_argument("--hs", type=float, required=True)
    residual.add_argument("--fb", type=float, required=True)
    residual.add_argument("--rhos", type=float, required=True)
    residual.add_argument("--hi", type=float, help="ice thickness; the balanced value when omitted")

    proxy = physics_commands.add_parser("proxy", help="proxy ice thickness target")
    proxy.add_argument("--sic", type=float, required=True)
    proxy.add_argument("--albedo", type=float, required=True)
    proxy.add_argument("--rhos", type=float, default=300.0)

    nonunique = physics_commands.add_parser("nonunique", help="(h_s, f_b) pairs reproducing one thickness")
    nonunique.add_argument("--target", type=float, required=True)
    nonunique.add_argument("--rhos", type=float, default=330.0)
    nonunique.add_argument("--grid", type=int, default=100)
    nonunique.add_argument("--step", type=float, default=0.01)
    nonunique.add_argument("--out")

    physics_commands.add_parser("params", help="known and unknown parameters of the column")

    for demo in (forward, residual, proxy, nonunique):
        demo.add_argument("--rhow", type=float, dest="rho_w")
        demo.add_argument("--rhoi", type=float, dest="rho_i")
    return parser


OVERRIDE_KEYS = set(RunConfig().to_dict())


def load_config(args: argparse.Namespace) -> ConfigHandler:
    """Config file (explicit or default) plus every flag whose dest is a config key."""
    overrides = {key: value for key, value in vars(args).items() if key in OVERRIDE_KEYS and value is not None}
    explicit = getattr(args, "config", None)
    return ConfigHandler(explicit or DEFAULT_CONFIG_PATH, overrides=overrides, required=explicit is not None)


# --- commands ---------------------------------------------------------------

def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    from .data import SynthParams, synthesize_series, write_csv

    series = synthesize_series(config.synth_length, config.data_seed, SynthParams(noise_scale=config.synth_noise_scale))
    path = write_csv(series, args.out)
    print(f"wrote {len(series)} records to {path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    from .training import train

    outcome = train(config, Path(config.out_dir))
    report = outcome.report
    print(f"model={report.model} pe={report.pe} scl={report.scl} seed={report.seed}")
    print(f"initial_test_mse={report.initial_test_mse!r}")
    print(f"test_mse={report.test_mse!r} test_rmse={report.test_rmse!r}")
    print(f"artifacts: {config.out_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    from .data import build_dataset, build_full_source, ingest_csv
    from .model import load_checkpoint
    from .training import evaluate, load_series, write_plot_data

    checkpoint = load_checkpoint(args.checkpoint)
    if checkpoint.stats is None:
        raise DataError(f"Checkpoint {args.checkpoint} holds no normalization statistics")
    saved = RunConfig.from_dict(checkpoint.config) if checkpoint.config else config
    data_path = args.data_path or saved.data_path
    series = ingest_csv(data_path) if data_path else load_series(saved)

    if args.portion == "test":
        dataset = build_dataset(series, saved.split_fraction, saved.constants(), 0.0, saved.seed,
                                stats=checkpoint.stats)
        source = dataset.test
    else:
        source = build_full_source(series, checkpoint.stats, saved.constants())
    result = evaluate(checkpoint.model, source, saved.histogram_bins)

    out_dir = Path(config.out_dir) / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    payload: Dict[str, Any] = {
        "checkpoint": str(args.checkpoint),
        "portion": args.portion,
        "data": data_path,
        "n_windows": len(source),
        **result.metrics(),
    }
    (out_dir / "eval_report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                              encoding="utf-8")
    write_plot_data(out_dir, result)
    print(f"portion={args.portion} windows={len(source)}")
    print(f"mse={result.mse!r} rmse={result.rmse!r}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, config: RunConfig) -> int:
    from .model import MODEL_KINDS
    from .objectives import CL_VARIANTS
    from .training import AblationGrid, run_ablation

    models = tuple(args.models or [config.model])
    variants = tuple(args.cl_variants or [config.cl_variant])
    bad = [m for m in models if m not in MODEL_KINDS] + [v for v in variants if v not in CL_VARIANTS]
    if bad:
        raise ConfigError(f"Configuration error: unknown model kind or contrastive variant {bad}")
    if args.seed_count < 1:
        raise ConfigError("Configuration error: --seeds must be at least 1")

    grid = AblationGrid(
        splits=tuple(args.splits),
        scl=TOGGLES[args.scl_grid],
        pe=TOGGLES[args.pe_grid],
        models=models,
        cl_variants=variants,
        seeds=tuple(config.seed + i for i in range(args.seed_count)),
    )
    outcome = run_ablation(config, grid, Path(config.out_dir), workers=config.workers)

    for row in outcome.summary:
        median = "n/a" if row["median_mse"] is None else f"{row['median_mse']:.6f}"
        print(f"{row['model']:<10} split={row['split']:<4} scl={str(row['scl']).lower():<5} "
              f"pe={str(row['pe']).lower():<5} {row['cl_variant']:<9} median_mse={median} "
              f"seeds={row['seeds']} failed={row['failed']}")
    for check in outcome.direction:
        print(f"direction {check['effect']} {check['model']} split={check['split']}: passed={check['passed']}")
    if outcome.failures:
        print(f"{len(outcome.failures)} of {len(outcome.results)} cell(s) failed; see failures.json", file=sys.stderr)
    return EXIT_NUMERIC if not outcome.reports else EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, config: RunConfig) -> int:
    from .gradcheck_suite import run_suite

    ops = [name for group in args.op for name in group] if args.op else None
    summaries = run_suite(ops, seeds=args.seeds, eps=args.eps, tolerance=args.tolerance)
    for summary in summaries:
        status = "ok" if summary.passed else "FAIL"
        print(f"{summary.name:<18} max_rel_error={summary.max_error:.3e} checks={summary.checks:<4} {status}")
    failed = [s for s in summaries if not s.passed]
    for summary in failed:
        for failure in summary.failures[:3]:
            print(f"  {summary.name}: {failure}", file=sys.stderr)
    if failed:
        print(f"gradient check failed for: {', '.join(s.name for s in failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_physics(args: argparse.Namespace, config: RunConfig) -> int:
    from . import physics

    demo = args.physics_command
    if demo == "params":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["category", "parameter", "notation", "type"])
        writer.writerows(physics.parameter_table())
        return EXIT_OK

    constants = config.constants()
    if demo == "forward":
        print(f"h_i,{physics.forward_thickness(args.hs, args.fb, args.rhos, constants)!r}")
    elif demo == "residual":
        if args.hi is None:
            state = physics.balanced_state(args.hs, args.fb, args.rhos, constants)
        else:
            state = physics.HydrostaticState(h_i=args.hi, h_s=args.hs, f_b=args.fb,
                                             h_sub=physics.submerged_depth(args.hi, args.hs, args.fb),
                                             rho_s=args.rhos)
        for key in ("h_i", "h_s", "f_b", "h_sub"):
            print(f"{key},{getattr(state, key)!r}")
        print(f"residual,{physics.hydrostatic_residual(state, constants)!r}")
    elif demo == "proxy":
        value = physics.proxy_target(physics.ProxyInputs(sic=args.sic, albedo=args.albedo, rho_s=args.rhos), constants)
        print(f"h_i_proxy,{value!r}")
    elif demo == "nonunique":
        pairs = physics.demonstrate_nonuniqueness(args.target, args.rhos, constants, grid=(args.grid, args.grid),
                                                  step=args.step)
        handle = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
        try:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["h_s", "f_b", "h_i"])
            for h_s, f_b in pairs:
                writer.writerow([repr(h_s), repr(f_b), repr(physics.forward_thickness(h_s, f_b, args.rhos, constants))])
        finally:
            if args.out:
                handle.close()
        logger.info(f"{len(pairs)} pair(s) reproduce h_i={args.target}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "physics": cmd_physics,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        handler = load_config(args)
        setup_logging(handler)
        logger.debug(f"Running '{args.command}' with config hash {handler.run_config().config_hash()}")
        return COMMANDS[args.command](args, handler.run_config())
    except PhysEInvError as e:
        label = "Configuration validation failed" if isinstance(e, ConfigError) else type(e).__name__
        print(f"ERROR: {label}: {e}", file=sys.stderr)
        logging.critical(f"{label}: {e}", exc_info=False)
        return e.exit_code
    except OSError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        logging.critical(f"File error: {e}", exc_info=False)
        return EXIT_DATA


def run():
    # Setup signal handlers early
    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)
    try:
        sys.exit(main())
    except SystemExit:
        raise
    except Exception:
        # Catch any other unexpected errors during startup or runtime
        logger.critical("An unexpected critical error occurred:", exc_info=True)
        sys.exit(EXIT_USAGE)


if __name__ == '__main__':
    run()
