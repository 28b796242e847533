"""Single command-line entry point for every headless workflow.

Subcommands: simulate (device simulator), monitor (host service), calibrate
fit, placement analyze, replay (log verification), decode (wire captures).
Exit codes: 0 success, 1 flag/input validation error, 2 runtime failure.
All flag validation happens before any side effect.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .calibration import (
    CalibrationError,
    InsufficientDataError,
    fit_cubic,
    read_samples_csv,
    residual_rms,
    save_model,
)
from .config import ServiceConfigError, load_service_config, resolve_model
from .device import TrajectoryError, TrajectorySpec, load_trajectory_csv, run_device
from .placement import (
    StudyDataError,
    aggregate_means,
    fit_site_models,
    read_study_csv,
    render_report,
    select_placement,
    write_means_csv,
)
from .protocol import Ack, DecodeError, Heartbeat, SensorData, Vibrate, decode_bytes
from .replay import ReplayError, replay_log
from .transport import TransportError, listen_once, parse_endpoint

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1, not 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sipo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sipo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the simulated wearable device")
    p_sim.add_argument("--trajectory", required=True, help="CSV of time_ms,angle_deg waypoints")
    p_sim.add_argument("--model", default="reference", help="'reference' or a model file path")
    p_sim.add_argument("--listen", required=True, help="host:port to accept the monitor on")
    p_sim.add_argument("--no-pace", action="store_true", help="emit as fast as possible")
    p_sim.add_argument("--seed", type=int, default=0, help="noise RNG seed")
    p_sim.add_argument("--noise-sigma", type=float, default=1.0, help="noise stddev in counts")
    p_sim.add_argument("--rate", type=float, default=20.0, help="sample rate in Hz")
    p_sim.add_argument("--actuation-log", default=None, help="append vibration actuations here")
    p_sim.add_argument("--linger-ms", type=int, default=500, help="drain window after trajectory end")
    p_sim.add_argument("--accept-timeout", type=float, default=None, help="give up waiting for a peer")
    p_sim.add_argument("--format", choices=("text", "record"), default="text")

    p_mon = sub.add_parser("monitor", help="run the host monitor service")
    p_mon.add_argument("--config", default=None, help="JSON service config file")
    p_mon.add_argument("--device", default=None, help="device endpoint host:port or 'stdio'")
    p_mon.add_argument("--api", default=None, help="API listen address host:port")
    p_mon.add_argument("--log", default=None, help="session log path")
    p_mon.add_argument("--model", default=None, help="'reference' or a model file path")
    p_mon.add_argument("--ui-dir", default=None, help="serve this directory at /ui/")

    p_cal = sub.add_parser("calibrate", help="calibration model workflows")
    cal_sub = p_cal.add_subparsers(dest="calibrate_command", required=True)
    p_fit = cal_sub.add_parser("fit", help="least-squares cubic from samples")
    p_fit.add_argument("--in", dest="input", required=True, help="CSV of angle_deg,sensor_counts")
    p_fit.add_argument("--out", dest="output", default=None, help="write the fitted model here")
    p_fit.add_argument("--format", choices=("text", "record"), default="text")

    p_pl = sub.add_parser("placement", help="sensor-placement study analytics")
    pl_sub = p_pl.add_subparsers(dest="placement_command", required=True)
    p_an = pl_sub.add_parser("analyze", help="means, sensitivity ranges, site selection, fits")
    p_an.add_argument("--in", dest="input", required=True, help="study CSV")
    p_an.add_argument("--report", default=None, help="also write the report to this file")
    p_an.add_argument("--means-csv", default=None, help="write the plottable means table here")
    p_an.add_argument("--format", choices=("text", "record"), default="text")

    p_rep = sub.add_parser("replay", help="re-run the engine over a session log")
    p_rep.add_argument("--log", required=True, help="session log to verify")
    p_rep.add_argument("--format", choices=("text", "record"), default="text")

    p_dec = sub.add_parser("decode", help="pretty-print a wire capture")
    p_dec.add_argument("--in", dest="input", required=True, help="raw captured bytes")
    p_dec.add_argument("--format", choices=("text", "record"), default="text")

    return parser


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise _Validation(f"{what} not found: {path}")
    return p


class _Validation(Exception):
    pass


def _cmd_simulate(args) -> int:
    _require_file(args.trajectory, "trajectory file")
    waypoints = load_trajectory_csv(args.trajectory)
    spec = TrajectorySpec(
        waypoints=waypoints,
        noise_sigma=args.noise_sigma,
        sample_rate_hz=args.rate,
        seed=args.seed,
    )
    model = resolve_model(args.model)
    endpoint = parse_endpoint(args.listen)
    if endpoint.is_stdio:
        raise _Validation("--listen needs host:port; stdio device runs are not supported here")
    print(f"listening on {endpoint} ...", file=sys.stderr)
    transport, port = listen_once(endpoint.host, endpoint.port, timeout=args.accept_timeout)
    print(f"peer connected on port {port}", file=sys.stderr)
    report = run_device(
        spec,
        model,
        transport,
        pace=not args.no_pace,
        actuation_log_path=args.actuation_log,
        linger_ms=args.linger_ms,
    )
    if args.format == "record":
        print(json.dumps(report.to_record()))
    else:
        for key, value in report.to_record().items():
            print(f"{key}={value}")
    return EXIT_OK if report.error is None else EXIT_RUNTIME


def _cmd_monitor(args) -> int:
    from .api import ApiServer
    from .service import MonitorService, ServiceStartupError

    overrides = {
        "device": args.device,
        "api_addr": args.api,
        "log_path": args.log,
        "model": args.model,
        "ui_dir": args.ui_dir,
    }
    config = load_service_config(args.config, overrides=overrides)
    service = MonitorService(config)
    try:
        service.start()
    except ServiceStartupError as exc:
        print(f"sipo monitor: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    api = ApiServer(service, config.api_host, config.api_port)
    api.start()
    print(f"monitoring {config.device}; API on http://{config.api_host}:{api.port}", file=sys.stderr)
    try:
        service.join()
    except KeyboardInterrupt:
        print("shutting down", file=sys.stderr)
    finally:
        service.stop()
        api.stop()
    return EXIT_OK


def _cmd_calibrate_fit(args) -> int:
    _require_file(args.input, "samples file")
    samples = read_samples_csv(args.input)
    model = fit_cubic(samples)
    rms = residual_rms(model, samples)
    if args.output is not None:
        save_model(model, args.output)
    if args.format == "record":
        print(json.dumps({
            "c0": model.c0, "c1": model.c1, "c2": model.c2, "c3": model.c3,
            "angle_min": model.angle_min, "angle_max": model.angle_max,
            "residual_rms_counts": rms, "n_samples": len(samples),
        }))
    else:
        for key in ("c3", "c2", "c1", "c0"):
            print(f"{key}={getattr(model, key):.12g}")
        print(f"angle_min={model.angle_min:.12g}")
        print(f"angle_max={model.angle_max:.12g}")
        print(f"residual_rms_counts={rms:.6g}")
        print(f"n_samples={len(samples)}")
    return EXIT_OK


def _cmd_placement_analyze(args) -> int:
    _require_file(args.input, "study file")
    records = read_study_csv(args.input)
    means = aggregate_means(records)
    selection = select_placement(means)
    fits = fit_site_models(records)
    if args.means_csv is not None:
        write_means_csv(means, args.means_csv)
    report_text = render_report(selection, fits)
    if args.report is not None:
        Path(args.report).write_text(report_text + "\n", encoding="utf-8")
    if args.format == "record":
        print(json.dumps({
            "selected_site": selection.site.token,
            "tie": selection.tie,
            "ranges": {r.site.token: r.range_counts for r in selection.ranges},
            "fits": {
                site.token: (
                    {"c0": f.model.c0, "c1": f.model.c1, "c2": f.model.c2, "c3": f.model.c3,
                     "residual_rms_counts": f.residual_rms_counts, "n_records": f.n_records}
                    if f.model is not None else {"error": f.error, "n_records": f.n_records}
                )
                for site, f in fits.items()
            },
        }))
    else:
        print(report_text)
    return EXIT_OK


def _cmd_replay(args) -> int:
    _require_file(args.log, "session log")
    report = replay_log(args.log)
    if args.format == "record":
        print(json.dumps({
            "samples_replayed": report.samples_replayed,
            "events_compared": report.events_compared,
            "zone_mismatches": report.zone_mismatches,
            "divergences": [str(d) for d in report.divergences],
            "skipped_lines": report.skipped_lines,
            "ok": report.ok,
        }))
    else:
        print(f"samples_replayed={report.samples_replayed}")
        print(f"events_compared={report.events_compared}")
        print(f"zone_mismatches={report.zone_mismatches}")
        print(f"divergences={len(report.divergences)}")
        for d in report.divergences:
            print(f"  {d}")
        for line_no, reason in report.skipped_lines:
            print(f"skipped line {line_no}: {reason}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_RUNTIME


def _format_frame(frame) -> str:
    if isinstance(frame, SensorData):
        return f"SensorData ts_ms={frame.ts_ms} value={frame.value}"
    if isinstance(frame, Vibrate):
        return f"Vibrate duration_ms={frame.duration_ms}"
    if isinstance(frame, Ack):
        return f"Ack acked_type=0x{frame.acked_type:02X}"
    if isinstance(frame, Heartbeat):
        return "Heartbeat"
    return repr(frame)


def _cmd_decode(args) -> int:
    _require_file(args.input, "capture file")
    data = Path(args.input).read_bytes()
    frames, errors = decode_bytes(data)
    if args.format == "record":
        for frame in frames:
            record = {"frame": type(frame).__name__, **frame.__dict__}
            print(json.dumps(record))
        for error in errors:
            print(json.dumps({"error": error.kind.value, "detail": error.detail}))
    else:
        for frame in frames:
            print(_format_frame(frame))
        for error in errors:
            print(f"error {error.kind.value}: {error.detail}", file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse help/usage paths
        return int(exc.code or 0)
    handlers = {
        "simulate": _cmd_simulate,
        "monitor": _cmd_monitor,
        "replay": _cmd_replay,
        "decode": _cmd_decode,
    }
    try:
        if args.command == "calibrate":
            return _cmd_calibrate_fit(args)
        if args.command == "placement":
            return _cmd_placement_analyze(args)
        return handlers[args.command](args)
    except (
        _Validation,
        ServiceConfigError,
        TrajectoryError,
        StudyDataError,
        InsufficientDataError,
        ValueError,
    ) as exc:
        print(f"sipo {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (CalibrationError, ReplayError, TransportError, OSError) as exc:
        print(f"sipo {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
