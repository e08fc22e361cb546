"""
Command-line surface.

    simulate  trajectory spec -> JSONL stream (and optional error CSV)
    fit       error CSV -> noise profile + fit report
    filter    stream + config -> filtered stream + metrics
    eval      two streams -> metrics comparison table
    compare   stream -> original / standard / adaptive / adaptive + loop closure
    serve     config -> TCP frame server or WebSocket bridge

Every subcommand takes --config. Exit status: 0 success, 1 usage error,
2 data error.
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from core.adaptive_noise import save_profile
from core.errors import TrackerError
from core.error_fit import (
    DEFAULT_BIN_WIDTH,
    DEFAULT_RANGE,
    bin_errors,
    compute_errors,
    export_profile,
    fit_gauss1d,
    fit_gauss1d_raw,
    fit_gauss2d,
    fit_report,
    surface_points,
)
from core.pose import AXES
from core.synth import corrupt, error_pairs, gen_trajectory

from .config import RunConfig, configure_logging, load_config, parse_address
from .runner import SessionFactory, compare_variants, evaluate_streams, run_filter_pipeline
from .streams import read_error_pairs, read_stream, write_error_pairs, write_stream


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

SEPARATOR = "━" * 70


class TrackerArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> TrackerArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (default: $HPT_CONFIG or config/tracker.yaml)")

    parser = TrackerArgumentParser(prog="hpt", description="Adaptive Kalman head-pose tracker")
    commands = parser.add_subparsers(dest="command", parser_class=TrackerArgumentParser)
    commands.required = True

    simulate = commands.add_parser("simulate", parents=[common], help="generate a synthetic stream")
    simulate.add_argument("--out", required=True, help="output stream (.jsonl or .csv)")
    simulate.add_argument("--errors-csv", help="also write (true, predicted) pairs for `fit`")
    simulate.add_argument("--seed", type=int, help="overrides synth.seed")
    simulate.add_argument("--noise", help="synthetic estimator noise (fsa_net_like, hopenet_like)")
    simulate.add_argument("--clean", action="store_true", help="write ground truth without noise")

    fit = commands.add_parser("fit", parents=[common], help="fit noise curves to estimator errors")
    fit.add_argument("--in", dest="input", required=True, help="error CSV")
    fit.add_argument("--axis", action="append", choices=AXES, help="axis to fit (repeatable; default all)")
    fit.add_argument("--out", help="profile document to write")
    fit.add_argument("--report", help="fit report JSON to write")
    fit.add_argument("--name", default="fitted", help="profile name")
    fit.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH)
    fit.add_argument("--range", type=float, nargs=2, default=list(DEFAULT_RANGE), metavar=("LO", "HI"))
    fit.add_argument("--raw", action="store_true", help="fit raw samples instead of bin means")
    fit.add_argument("--surface", nargs=2, choices=AXES, metavar=("X", "Y"), help="also fit E(x, y)")
    fit.add_argument("--workers", type=int, default=1)

    filt = commands.add_parser("filter", parents=[common], help="filter a stream file")
    filt.add_argument("--in", dest="input", help="input stream (overrides io.input)")
    filt.add_argument("--out", dest="output", help="filtered stream (overrides io.output)")
    filt.add_argument("--metrics", help="metrics JSON file (overrides io.metrics)")
    filt.add_argument("--profile", help="noise profile name or path (overrides noise.profile)")
    filt.add_argument("--format", choices=("jsonl", "csv"), help="input format (default: by suffix)")
    filt.add_argument("--loop-closure", action="store_true", default=None, help="enable loop closure")

    evaluate = commands.add_parser("eval", parents=[common], help="compare two streams")
    evaluate.add_argument("candidate", help="stream under evaluation")
    evaluate.add_argument("reference", help="reference stream (same timestamps)")
    evaluate.add_argument("--json", help="write the comparison as JSON")

    compare = commands.add_parser("compare", parents=[common], help="filter variants on one stream")
    compare.add_argument("--in", dest="input", help="input stream (overrides io.input)")
    compare.add_argument("--profile", help="noise profile name or path")
    compare.add_argument("--json", help="write the comparison as JSON")

    serve = commands.add_parser("serve", parents=[common], help="run a frame server")
    serve.add_argument("--listen", help="host:port (overrides io.listen / api section)")
    serve.add_argument("--transport", choices=("tcp", "websocket"), help="overrides io.transport")

    return parser


def _print_header(title: str):
    print(f"\n{SEPARATOR}")
    print(title)
    print(SEPARATOR)


def _axis_table(report: Dict[str, Dict[str, Any]], keys: Sequence[str]) -> str:
    rows = []
    for name, metrics in report.items():
        row: Dict[str, Any] = {"variant": name}
        for key in keys:
            values = metrics.get(key) or {}
            for axis in AXES:
                row[f"{key}.{axis}"] = values.get(axis) if isinstance(values, dict) else None
        row["settle_time"] = metrics.get("settle_time")
        rows.append(row)
    return pd.DataFrame(rows).set_index("variant").to_string(float_format=lambda v: f"{v:.3f}")


def cmd_simulate(args, config: RunConfig) -> int:
    synth = config.synth
    if args.seed is not None:
        synth = synth.model_copy(update={"seed": args.seed})
    if args.noise is not None:
        synth = synth.model_copy(update={"noise": args.noise})

    frames = gen_trajectory(synth.trajectory_spec())
    noise = None
    if not args.clean:
        noise = synth.noise_spec()
        frames = corrupt(frames, noise)
    path = write_stream(args.out, frames)

    _print_header("🎬 SIMULATION")
    print(f"   ✅ {len(frames):,} frames → {path}")
    print(f"      - Noise: {noise.name if noise else 'none'} (seed {synth.seed})")
    if args.errors_csv:
        pairs_path = write_error_pairs(args.errors_csv, error_pairs(frames))
        print(f"   ✅ Error pairs → {pairs_path}")
    return EXIT_OK


def cmd_fit(args, config: RunConfig) -> int:
    pairs = read_error_pairs(args.input)
    samples = compute_errors(pairs)
    axes = args.axis or list(AXES)

    fits, bins = {}, {}
    for axis in dict.fromkeys(axes):
        bins[axis] = bin_errors(samples, axis, args.bin_width, tuple(args.range))
        if args.raw:
            fits[axis] = fit_gauss1d_raw(samples, axis, workers=args.workers)
        else:
            fits[axis] = fit_gauss1d(bins[axis], workers=args.workers)

    surface = None
    if args.surface:
        x_axis, y_axis = args.surface
        surface = fit_gauss2d(
            surface_points(samples, x_axis, y_axis), workers=args.workers, x_axis=x_axis, y_axis=y_axis
        )

    _print_header(f"📈 ERROR FIT ({len(samples):,} samples)")
    for axis, fit in fits.items():
        flag = "degenerate" if fit.degenerate else ("converged" if fit.converged else "NOT converged")
        print(
            f"   {'✅' if fit.converged or fit.degenerate else '⚠️ '} {axis:<5} "
            f"lambda={fit.lambda_:.6g} mu={fit.mu:.4g} sigma={fit.sigma:.4g} tau={fit.tau:.6g} "
            f"rms={fit.residual_rms:.4g} ({flag})"
        )
    if surface is not None:
        print(f"   ✅ surface {surface.x_axis}/{surface.y_axis} rms={surface.residual_rms:.4g}")

    if args.report:
        report_path = Path(args.report)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(fit_report(fits, bins, surface), indent=2))
        print(f"   ✅ Report → {report_path}")
    if args.out:
        base = config.resolve_profile() if len(fits) < len(AXES) else None
        profile = export_profile(fits, args.name, sample_count=len(samples), base=base)
        print(f"   ✅ Profile → {save_profile(profile, args.out)}")
    return EXIT_OK


def cmd_filter(args, config: RunConfig) -> int:
    config = config.with_overrides(
        {
            "io.input": args.input,
            "io.output": args.output,
            "io.metrics": args.metrics,
            "io.format": args.format,
            "noise.profile": args.profile,
            "loop_closure.enabled": args.loop_closure,
        }
    )
    result = run_filter_pipeline(config)
    print(json.dumps(result.metrics, indent=2))
    return EXIT_OK


def cmd_eval(args, config: RunConfig) -> int:
    candidate = read_stream(args.candidate, strict=config.io.strict_order)
    reference = read_stream(args.reference, strict=config.io.strict_order)
    report = evaluate_streams(candidate, reference)

    _print_header("📊 STREAM COMPARISON")
    table = pd.DataFrame(
        {
            key: report[key]
            for key in ("difference_rmse", "candidate_jitter", "reference_jitter", "candidate_rmse", "reference_rmse")
            if report.get(key) is not None
        }
    )
    print(table.to_string(float_format=lambda v: f"{v:.3f}") if not table.empty else "   (no metrics)")
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_compare(args, config: RunConfig) -> int:
    config = config.with_overrides({"io.input": args.input, "noise.profile": args.profile})
    if config.io.input is None:
        raise ValueError("no input stream configured (io.input or --in)")
    frames = read_stream(config.io.input, config.io.format, strict=config.io.strict_order)
    report = compare_variants(config, frames)

    _print_header(f"🔬 FILTER VARIANTS ({len(frames):,} frames)")
    has_truth = report["original"]["rmse"] is not None
    print(_axis_table(report, ["rmse", "jitter"] if has_truth else ["jitter"]))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_serve(args, config: RunConfig) -> int:
    transport = args.transport or config.io.transport
    if transport == "websocket":
        import uvicorn

        from api import api_server

        host, port = parse_address(args.listen) if args.listen else (config.api.host, config.api.port)
        api_server.configure(config)
        _print_header("🚀 WEBSOCKET BRIDGE")
        print(f"   - REST API: http://{host}:{port}")
        print(f"   - WebSocket: ws://{host}:{port}/ws/track")
        uvicorn.run(api_server.app, host=host, port=port, log_level=config.logging.level.lower())
        return EXIT_OK

    from api.frame_server import serve

    host, port = parse_address(args.listen) if args.listen else config.io.listen_address()
    factory = SessionFactory.from_config(config)
    _print_header("🚀 FRAME SERVER")
    print(f"   - Listening: {host}:{port}")
    print(f"   - Profile: {factory.profile.name}")
    try:
        asyncio.run(serve(host, port, factory))
    except KeyboardInterrupt:
        print("\n🛑 Shutdown complete")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "filter": cmd_filter,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "serve": cmd_serve,
}


def cli_dispatch(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run the subcommand and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    try:
        config = load_config(args.config)
        configure_logging(config)
        return COMMANDS[args.command](args, config)
    except (TrackerError, ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_DATA
