"""Strict JSON configuration for the production cell and reports.

One JSON document describes a whole run: the cell topology (designs,
magazines, printers), slicing parameters, the robot failure model, and
report output.  Parsing is strict: unknown keys are rejected and every
error names the offending key path, so a typo like ``"lаyer_height"``
fails loudly instead of silently using a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .geometry import PlacementBox
from .inventory import MagazineKind
from .orchestration import CellConfig, FingertipDesign, MagazineSpec
from .robot import FailureModel, SkillKind, ToleranceEnvelope
from .slicing import AdhesionOption, SliceConfig

__all__ = ["AppConfig", "ConfigError", "ReportConfig", "load_config", "parse_config"]


class ConfigError(Exception):
    """Configuration document is invalid; the message names the key path."""


@dataclass(frozen=True)
class ReportConfig:
    format: str = "csv"
    out: str | None = None

    def __post_init__(self) -> None:
        if self.format not in ("csv", "json"):
            raise ValueError(f"report format must be csv or json, got {self.format!r}")


@dataclass(frozen=True)
class AppConfig:
    cell: CellConfig
    report: ReportConfig = field(default_factory=ReportConfig)


def _check_keys(section: Mapping, allowed: set[str], path: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {path}.{unknown[0]}")


def _expect(value: Any, kind: type, path: str) -> Any:
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_design(key: str, section: Any, base_dir: Path, path: str) -> FingertipDesign:
    section = _expect(section, dict, path)
    _check_keys(section, {"stl_path", "rotation_euler_deg", "kind"}, path)
    if "stl_path" not in section:
        raise ConfigError(f"{path}.stl_path is required")
    stl_path = Path(_expect(section["stl_path"], str, f"{path}.stl_path"))
    if not stl_path.is_absolute():
        stl_path = base_dir / stl_path
    rotation = section.get("rotation_euler_deg", [0.0, 0.0, 0.0])
    rotation = _expect(rotation, list, f"{path}.rotation_euler_deg")
    if len(rotation) != 3:
        raise ConfigError(f"{path}.rotation_euler_deg: expected 3 angles")
    return FingertipDesign(
        design_id=key,
        stl_path=stl_path,
        rotation_euler_deg=tuple(
            _expect(v, float, f"{path}.rotation_euler_deg[{i}]")
            for i, v in enumerate(rotation)
        ),
        kind=_expect(section.get("kind", "key"), str, f"{path}.kind"),
    )


def _parse_magazine(section: Any, kind: MagazineKind, path: str) -> MagazineSpec:
    section = _expect(section, dict, path)
    _check_keys(section, {"magazine_id", "capacity", "initial_items"}, path)
    for required in ("magazine_id", "capacity"):
        if required not in section:
            raise ConfigError(f"{path}.{required} is required")
    items = section.get("initial_items", [])
    items = _expect(items, list, f"{path}.initial_items")
    return MagazineSpec(
        magazine_id=_expect(section["magazine_id"], str, f"{path}.magazine_id"),
        kind=kind,
        capacity=_expect(section["capacity"], int, f"{path}.capacity"),
        initial_items=tuple(
            _expect(item, str, f"{path}.initial_items[{i}]")
            for i, item in enumerate(items)
        ),
    )


def _parse_slice(section: Any, path: str) -> SliceConfig:
    section = _expect(section, dict, path)
    allowed = {
        "layer_height",
        "infill_density",
        "adhesion_option",
        "z_offset",
        "post_print_commands",
        "command_template",
    }
    _check_keys(section, allowed, path)
    kwargs: dict[str, Any] = {}
    for key in ("layer_height", "infill_density", "z_offset"):
        if key in section:
            kwargs[key] = _expect(section[key], float, f"{path}.{key}")
    if "adhesion_option" in section:
        raw = _expect(section["adhesion_option"], str, f"{path}.adhesion_option")
        try:
            kwargs["adhesion_option"] = AdhesionOption(raw)
        except ValueError:
            raise ConfigError(
                f"{path}.adhesion_option: {raw!r} is not one of "
                f"{[o.value for o in AdhesionOption]}"
            ) from None
    if "post_print_commands" in section:
        commands = _expect(
            section["post_print_commands"], list, f"{path}.post_print_commands"
        )
        kwargs["post_print_commands"] = tuple(
            _expect(c, str, f"{path}.post_print_commands[{i}]")
            for i, c in enumerate(commands)
        )
    if "command_template" in section:
        kwargs["command_template"] = _expect(
            section["command_template"], str, f"{path}.command_template"
        )
    try:
        return SliceConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_envelope(section: Any, path: str) -> ToleranceEnvelope:
    section = _expect(section, dict, path)
    _check_keys(section, {"position_mm", "rotation_deg"}, path)
    kwargs = {}
    for key in ("position_mm", "rotation_deg"):
        if key in section:
            values = _expect(section[key], list, f"{path}.{key}")
            if len(values) != 3:
                raise ConfigError(f"{path}.{key}: expected 3 per-axis limits")
            kwargs[key] = tuple(
                _expect(v, float, f"{path}.{key}[{i}]") for i, v in enumerate(values)
            )
    try:
        return ToleranceEnvelope(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_failure_model(section: Any, path: str) -> FailureModel:
    section = _expect(section, dict, path)
    allowed = {
        "base_success",
        "default_success",
        "position_noise_mm",
        "rotation_noise_deg",
        "envelopes",
        "out_of_envelope_success",
        "rng_seed",
    }
    _check_keys(section, allowed, path)
    kwargs: dict[str, Any] = {}
    if "base_success" in section:
        raw = _expect(section["base_success"], dict, f"{path}.base_success")
        by_kind = {}
        for name, value in raw.items():
            try:
                kind = SkillKind(name)
            except ValueError:
                raise ConfigError(
                    f"{path}.base_success.{name}: not a skill kind"
                ) from None
            by_kind[kind] = _expect(value, float, f"{path}.base_success.{name}")
        kwargs["base_success"] = by_kind
    for key in (
        "default_success",
        "position_noise_mm",
        "rotation_noise_deg",
        "out_of_envelope_success",
    ):
        if key in section:
            kwargs[key] = _expect(section[key], float, f"{path}.{key}")
    if "rng_seed" in section:
        kwargs["rng_seed"] = _expect(section["rng_seed"], int, f"{path}.rng_seed")
    if "envelopes" in section:
        raw = _expect(section["envelopes"], dict, f"{path}.envelopes")
        kwargs["envelopes"] = {
            name: _parse_envelope(value, f"{path}.envelopes.{name}")
            for name, value in raw.items()
        }
    try:
        return FailureModel(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_cell(
    section: Any,
    slice_config: SliceConfig,
    failure_model: FailureModel,
    base_dir: Path,
    path: str,
) -> CellConfig:
    section = _expect(section, dict, path)
    allowed = {
        "designs",
        "placement_box",
        "base_magazines",
        "qfe_magazine",
        "skill_duration_s",
        "use_stub_slicer",
        "rng_seed",
        "print_durations",
        "api_key",
        "poll_interval_s",
    }
    _check_keys(section, allowed, path)
    for required in ("designs", "placement_box", "base_magazines", "qfe_magazine"):
        if required not in section:
            raise ConfigError(f"{path}.{required} is required")

    designs_raw = _expect(section["designs"], dict, f"{path}.designs")
    designs = {
        key: _parse_design(key, value, base_dir, f"{path}.designs.{key}")
        for key, value in designs_raw.items()
    }

    box_raw = _expect(section["placement_box"], dict, f"{path}.placement_box")
    _check_keys(box_raw, {"b_x", "b_y"}, f"{path}.placement_box")
    if "b_y" not in box_raw:
        raise ConfigError(f"{path}.placement_box.b_y is required")
    placement_box = PlacementBox(
        b_x=_expect(box_raw.get("b_x", float("inf")), float, f"{path}.placement_box.b_x"),
        b_y=_expect(box_raw["b_y"], float, f"{path}.placement_box.b_y"),
    )

    magazines_raw = _expect(section["base_magazines"], list, f"{path}.base_magazines")
    base_magazines = tuple(
        _parse_magazine(m, MagazineKind.FINGER_BASE, f"{path}.base_magazines[{i}]")
        for i, m in enumerate(magazines_raw)
    )
    qfe_magazine = _parse_magazine(
        section["qfe_magazine"], MagazineKind.QFE, f"{path}.qfe_magazine"
    )

    kwargs: dict[str, Any] = {}
    if "skill_duration_s" in section:
        kwargs["skill_duration_s"] = _expect(
            section["skill_duration_s"], float, f"{path}.skill_duration_s"
        )
    if "use_stub_slicer" in section:
        kwargs["use_stub_slicer"] = _expect(
            section["use_stub_slicer"], bool, f"{path}.use_stub_slicer"
        )
    if "rng_seed" in section:
        kwargs["rng_seed"] = _expect(section["rng_seed"], int, f"{path}.rng_seed")
    if "print_durations" in section:
        raw = _expect(section["print_durations"], dict, f"{path}.print_durations")
        kwargs["print_durations"] = {
            name: _expect(value, float, f"{path}.print_durations.{name}")
            for name, value in raw.items()
        }
    if "api_key" in section:
        kwargs["api_key"] = _expect(section["api_key"], str, f"{path}.api_key")
    if "poll_interval_s" in section:
        kwargs["poll_interval_s"] = _expect(
            section["poll_interval_s"], float, f"{path}.poll_interval_s"
        )

    try:
        return CellConfig(
            designs=designs,
            placement_box=placement_box,
            base_magazines=base_magazines,
            qfe_magazine=qfe_magazine,
            slice_config=slice_config,
            failure_model=failure_model,
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(document: Mapping, base_dir: Path | str = ".") -> AppConfig:
    """Build an AppConfig from an already-parsed JSON document."""
    base_dir = Path(base_dir)
    document = _expect(document, dict, "$")
    _check_keys(document, {"cell", "slice", "failure_model", "report"}, "$")
    if "cell" not in document:
        raise ConfigError("$.cell is required")

    slice_config = (
        _parse_slice(document["slice"], "$.slice")
        if "slice" in document
        else SliceConfig()
    )
    failure_model = (
        _parse_failure_model(document["failure_model"], "$.failure_model")
        if "failure_model" in document
        else FailureModel()
    )
    cell = _parse_cell(document["cell"], slice_config, failure_model, base_dir, "$.cell")

    report = ReportConfig()
    if "report" in document:
        section = _expect(document["report"], dict, "$.report")
        _check_keys(section, {"format", "out"}, "$.report")
        kwargs = {}
        if "format" in section:
            kwargs["format"] = _expect(section["format"], str, "$.report.format")
        if "out" in section:
            kwargs["out"] = _expect(section["out"], str, "$.report.out")
        try:
            report = ReportConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"$.report: {exc}") from exc

    return AppConfig(cell=cell, report=report)


def load_config(path: Path | str) -> AppConfig:
    """Read and validate a JSON config file.

    Relative STL paths resolve against the config file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(document, base_dir=path.parent)
