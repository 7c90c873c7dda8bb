"""Command-line entry point wiring all stages of the pipeline.

Subcommands mirror the production flow: transform-stl (orient and place a
fingertip model), edit-gcode (safety edits), slice, serve-mock-printer,
produce (a finger pair on two printers), simulate-campaign (task
experiments), and run-all (produce, then run the campaign for the
produced finger types).

Exit codes: 0 success, 1 domain error, 2 usage error.  Diagnostics go to
stderr; stdout carries data only when an output flag is given as ``-``.
The mock-printer API key can be set via the FINGERCELL_API_KEY
environment variable (flags and config values are overridden by it).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import threading
from pathlib import Path

from .clock import RealClock, VirtualClock
from .config import AppConfig, ConfigError, load_config
from .experiments import OBJECT_KINDS, emit_report, run_campaign
from .gcode import EditRules, apply_safety_edits, parse_gcode, serialize_gcode
from .geometry import (
    FitError,
    MeshError,
    PlacementBox,
    Rotation,
    bounding_box,
    check_fit,
    parse_stl,
    place_on_base,
    rotate_mesh,
    write_stl,
)
from .inventory import FingerStatus, InventoryError
from .mockserver import MockPrinterConfig, MockPrintServer
from .orchestration import ProductionError, simulated_cell
from .protocol import ProtocolError
from .qfe import QfeError
from .slicing import SliceConfig, SliceError, run_slicer

__all__ = ["main", "run"]

API_KEY_ENV_VAR = "FINGERCELL_API_KEY"

_DOMAIN_ERRORS = (
    ConfigError,
    FitError,
    InventoryError,
    MeshError,
    ProductionError,
    ProtocolError,
    QfeError,
    SliceError,
    ValueError,
    OSError,
)


def _parse_rotation(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("rotation must be RX,RY,RZ in degrees")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rotation {text!r}") from None


def _write_text(destination: str, text: str) -> None:
    if destination == "-":
        sys.stdout.write(text)
    else:
        Path(destination).write_text(text)


def _write_bytes(destination: str, data: bytes) -> None:
    if destination == "-":
        sys.stdout.buffer.write(data)
    else:
        Path(destination).write_bytes(data)


def _load_app_config(path: str) -> AppConfig:
    app = load_config(path)
    env_key = os.environ.get(API_KEY_ENV_VAR)
    if env_key:
        app = AppConfig(
            cell=dataclasses.replace(app.cell, api_key=env_key),
            report=app.report,
        )
    return app


def _cmd_transform_stl(args: argparse.Namespace) -> int:
    mesh = parse_stl(Path(args.input).read_bytes())
    if args.rot != (0.0, 0.0, 0.0):
        mesh = rotate_mesh(mesh, Rotation.from_euler_xyz_degrees(*args.rot))
    box = PlacementBox(b_x=args.bx, b_y=args.by)
    placed = place_on_base(mesh, box)
    fit = check_fit(bounding_box(placed), box)
    if fit.violations:
        raise FitError(fit.violations)
    _write_bytes(args.out, write_stl(placed, format=args.format))
    extent = bounding_box(placed)
    print(
        f"placed: x [{extent.min[0]:.3f}, {extent.max[0]:.3f}], "
        f"y [{extent.min[1]:.3f}, {extent.max[1]:.3f}], "
        f"z [{extent.min[2]:.3f}, {extent.max[2]:.3f}]",
        file=sys.stderr,
    )
    return 0


def _cmd_edit_gcode(args: argparse.Namespace) -> int:
    doc = parse_gcode(Path(args.input).read_text())
    rules = EditRules(safe_homing_replacement=args.home_replacement)
    doc, report = apply_safety_edits(doc, rules)
    _write_text(args.out, serialize_gcode(doc))
    print(
        f"homing lines modified: {report.homing_lines_modified}; "
        f"leveling lines removed: {report.leveling_lines_removed}",
        file=sys.stderr,
    )
    return 0


def _cmd_slice(args: argparse.Namespace) -> int:
    if args.config:
        slice_config = _load_app_config(args.config).cell.slice_config
    else:
        slice_config = SliceConfig()
    overrides = {}
    if args.layer_height is not None:
        overrides["layer_height"] = args.layer_height
    if args.infill is not None:
        overrides["infill_density"] = args.infill
    if args.z_offset is not None:
        overrides["z_offset"] = args.z_offset
    if overrides:
        slice_config = dataclasses.replace(slice_config, **overrides)
    output = Path(args.out) if args.out else Path(args.input).with_suffix(".gcode")
    result = run_slicer(slice_config, Path(args.input), output, stub=args.stub)
    print(f"wrote {result.gcode_path}", file=sys.stderr)
    return 0


def _wait_until_interrupted(server: MockPrintServer) -> None:
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


def _cmd_serve_mock_printer(args: argparse.Namespace) -> int:
    api_key = os.environ.get(API_KEY_ENV_VAR) or "mock-key"
    durations = None
    if args.config:
        cell = _load_app_config(args.config).cell
        api_key = cell.api_key
        durations = cell.print_durations
    config = MockPrinterConfig(
        printer_id=args.printer_id,
        api_key=api_key,
        **({"durations": durations} if durations is not None else {}),
    )
    server = MockPrintServer(config, RealClock(), port=args.port)
    server.start()
    print(f"serving {args.printer_id} at {server.base_url}", file=sys.stderr)
    _wait_until_interrupted(server)
    return 0


def _produce_pair(app: AppConfig, args: argparse.Namespace):
    cell_config = app.cell
    if args.seed is not None:
        cell_config = dataclasses.replace(cell_config, rng_seed=args.seed)
    clock = RealClock() if getattr(args, "real_clock", False) else VirtualClock()
    with simulated_cell(cell_config, clock=clock) as cell:
        record_a, record_b = cell.produce_finger_pair(args.design_a, args.design_b)
        log_text = cell.log.to_json_lines()
    records_text = (
        json.dumps(
            [record_a.to_dict(), record_b.to_dict()], indent=2, sort_keys=True
        )
        + "\n"
    )
    return record_a, record_b, log_text, records_text


def _cmd_produce(args: argparse.Namespace) -> int:
    app = _load_app_config(args.config)
    record_a, record_b, log_text, records_text = _produce_pair(app, args)
    _write_text(args.log_out, log_text)
    _write_text(args.records_out, records_text)
    print(
        f"finger A ({record_a.fingertip_design_id}): {record_a.status.value}; "
        f"finger B ({record_b.fingertip_design_id}): {record_b.status.value}",
        file=sys.stderr,
    )
    return 0


def _run_reported_campaign(
    app: AppConfig, args: argparse.Namespace, finger_types: list[str]
) -> tuple[str, str, int]:
    reports, table = run_campaign(
        args.trials, finger_types, app.cell.failure_model, seed=args.seed
    )
    fmt = args.format or app.report.format
    text = emit_report(reports, table, fmt)
    total = sum(len(r.results) for r in reports)
    return text, fmt, total


def _cmd_simulate_campaign(args: argparse.Namespace) -> int:
    app = _load_app_config(args.config)
    finger_types = args.finger_types or list(OBJECT_KINDS)
    text, fmt, total = _run_reported_campaign(app, args, finger_types)
    out = args.out or app.report.out or f"report.{fmt}"
    _write_text(out, text)
    print(
        f"{args.trials} trials x {len(finger_types)} finger types: "
        f"{total} experiments",
        file=sys.stderr,
    )
    return 0


def _cmd_run_all(args: argparse.Namespace) -> int:
    app = _load_app_config(args.config)
    record_a, record_b, log_text, records_text = _produce_pair(app, args)
    _write_text(args.log_out, log_text)
    _write_text(args.records_out, records_text)

    produced_kinds = []
    for record in (record_a, record_b):
        if record.status is not FingerStatus.READY:
            continue
        kind = app.cell.designs[record.fingertip_design_id].kind
        if kind not in produced_kinds:
            produced_kinds.append(kind)
    if not produced_kinds:
        raise ProductionError("no finger was produced; nothing to test")
    produced_kinds.sort(key=OBJECT_KINDS.index)

    text, fmt, total = _run_reported_campaign(app, args, produced_kinds)
    out = args.report_out or app.report.out or f"report.{fmt}"
    _write_text(out, text)
    print(
        f"produced {len(produced_kinds)} finger type(s); ran {total} experiments",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fingercell",
        description="Fingertip production and task-execution pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform-stl", help="rotate a model and place it on the base")
    p.add_argument("input", help="input STL file")
    p.add_argument("--by", type=float, required=True, help="boundary box depth b_y (mm)")
    p.add_argument("--bx", type=float, default=float("inf"), help="boundary box width b_x (mm)")
    p.add_argument("--rot", type=_parse_rotation, default=(0.0, 0.0, 0.0),
                   help="Euler rotation RX,RY,RZ in degrees (applied x, then y, then z)")
    p.add_argument("--out", required=True, help="output STL path, or - for stdout")
    p.add_argument("--format", choices=["binary", "ascii"], default="binary")
    p.set_defaults(func=_cmd_transform_stl)

    p = sub.add_parser("edit-gcode", help="apply the print-safety edits")
    p.add_argument("input", help="input gcode file")
    p.add_argument("--out", required=True, help="output path, or - for stdout")
    p.add_argument("--home-replacement", default="G28 X Y",
                   help="replacement for bare homing commands")
    p.set_defaults(func=_cmd_edit_gcode)

    p = sub.add_parser("slice", help="slice an STL to gcode")
    p.add_argument("input", help="input STL file")
    p.add_argument("--out", help="output gcode path (default: input with .gcode)")
    p.add_argument("--stub", action="store_true", help="use the hermetic stub slicer")
    p.add_argument("--config", help="JSON config file (slice section)")
    p.add_argument("--layer-height", type=float)
    p.add_argument("--infill", type=float, help="infill density in [0, 1]")
    p.add_argument("--z-offset", type=float)
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("serve-mock-printer", help="run a mock print server")
    p.add_argument("--port", type=int, default=0, help="TCP port (0 picks a free one)")
    p.add_argument("--printer-id", default="printer_A")
    p.add_argument("--config", help="JSON config file (durations, API key)")
    p.set_defaults(func=_cmd_serve_mock_printer)

    p = sub.add_parser("produce", help="produce a finger pair on two mock printers")
    p.add_argument("--design-a", required=True, help="design id for printer A")
    p.add_argument("--design-b", required=True, help="design id for printer B")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="override the cell rng seed")
    p.add_argument("--real-clock", action="store_true",
                   help="run on wall-clock time instead of the virtual clock")
    p.add_argument("--log-out", default="production_log.jsonl")
    p.add_argument("--records-out", default="production_records.json")
    p.set_defaults(func=_cmd_produce)

    p = sub.add_parser("simulate-campaign", help="run task-execution trials")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--finger-types", nargs="*", choices=list(OBJECT_KINDS),
                   help="finger types to test (default: all three)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--out", help="report path, or - for stdout")
    p.set_defaults(func=_cmd_simulate_campaign)

    p = sub.add_parser("run-all", help="produce a pair, then run the campaign")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--design-a", required=True)
    p.add_argument("--design-b", required=True)
    p.add_argument("--seed", type=int, default=0,
                   help="seed for both production and the campaign")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--log-out", default="production_log.jsonl")
    p.add_argument("--records-out", default="production_records.json")
    p.add_argument("--report-out", help="report path (default from config)")
    p.set_defaults(func=_cmd_run_all)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
