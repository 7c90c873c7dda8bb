"""Slicer invocation and a deterministic stub slicer for hermetic tests.

The real pipeline shells out to a command-line slicer through a tokenized
command template.  Tests and the simulated production cell use
:func:`stub_slice` instead, which emits a small deterministic gcode document
that deliberately contains one bare homing command and one bed probe so the
downstream safety edits always have work to do.
"""

from __future__ import annotations

import enum
import hashlib
import math
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .gcode import GcodeDocument, parse_gcode, serialize_gcode
from .geometry import TriangleMesh, bounding_box, parse_stl, write_stl

__all__ = [
    "AdhesionOption",
    "SliceConfig",
    "SliceError",
    "SliceResult",
    "SlicerNotFoundError",
    "build_command",
    "run_slicer",
    "stub_slice",
]

_PLACEHOLDERS = ("{input}", "{output}", "{params}")

DEFAULT_COMMAND_TEMPLATE = (
    "prusa-slicer --export-gcode {params} --output {output} {input}"
)


class SliceError(Exception):
    """Slicing failed (bad exit code or unusable output)."""


class SlicerNotFoundError(SliceError):
    """The configured slicer executable does not exist."""


class AdhesionOption(enum.Enum):
    NONE = "none"
    BRIM = "brim"
    SKIRT = "skirt"
    RAFT = "raft"


@dataclass(frozen=True)
class SliceConfig:
    layer_height: float = 0.2
    infill_density: float = 0.2
    adhesion_option: AdhesionOption = AdhesionOption.NONE
    z_offset: float = 0.0
    post_print_commands: tuple[str, ...] = ()
    command_template: str = DEFAULT_COMMAND_TEMPLATE

    def __post_init__(self) -> None:
        if not self.layer_height > 0:
            raise ValueError(f"layer_height must be positive, got {self.layer_height}")
        if not 0.0 <= self.infill_density <= 1.0:
            raise ValueError(
                f"infill_density must be within [0, 1], got {self.infill_density}"
            )
        object.__setattr__(
            self, "post_print_commands", tuple(self.post_print_commands)
        )


@dataclass(frozen=True)
class SliceResult:
    gcode_path: Path
    slicer_exit_code: int
    log: str


def _render_params(cfg: SliceConfig) -> list[str]:
    # Fixed order and formatting so command lines are reproducible:
    # millimeters to 3 decimals, density as a percent integer.
    return [
        "--layer-height",
        f"{cfg.layer_height:.3f}",
        "--fill-density",
        str(round(cfg.infill_density * 100)),
        "--adhesion",
        cfg.adhesion_option.value,
        "--z-offset",
        f"{cfg.z_offset:.3f}",
    ]


def build_command(cfg: SliceConfig, input_path: Path, output_path: Path) -> list[str]:
    """Expand the command template into an argv token list.

    ``{params}`` must be a standalone token (it splices a token list);
    ``{input}`` and ``{output}`` may be embedded inside larger tokens.
    """
    for placeholder in _PLACEHOLDERS:
        if placeholder not in cfg.command_template:
            raise SliceError(f"command template is missing {placeholder}")
    tokens: list[str] = []
    for token in shlex.split(cfg.command_template):
        if token == "{params}":
            tokens.extend(_render_params(cfg))
        else:
            tokens.append(
                token.replace("{input}", str(input_path)).replace(
                    "{output}", str(output_path)
                )
            )
    return tokens


def stub_slice(mesh: TriangleMesh, cfg: SliceConfig) -> GcodeDocument:
    """Deterministic hermetic slice: header, hazards, one move per layer.

    The layer count is ceil(height / layer_height); the small epsilon keeps
    exact multiples from rounding up one extra layer.
    """
    digest = hashlib.sha256(write_stl(mesh)).hexdigest()[:16]
    box = bounding_box(mesh)
    height = box.size[2]
    layers = max(0, math.ceil(height / cfg.layer_height - 1e-12))
    lines = [
        "; stub slicer output",
        f"; mesh sha256: {digest}",
        f"; layer_height: {cfg.layer_height:.3f}",
        f"; infill_density: {round(cfg.infill_density * 100)}",
        f"; adhesion: {cfg.adhesion_option.value}",
        f"; z_offset: {cfg.z_offset:.3f}",
        "M104 S210",
        "M109 S210",
        "G28",
        "G29",
        "G90",
        "G92 E0",
    ]
    for layer in range(1, layers + 1):
        z = box.min[2] + layer * cfg.layer_height
        corner = box.min if layer % 2 else box.max
        lines.append(f"; layer {layer}")
        lines.append(f"G1 Z{z:.3f} F9000")
        lines.append(f"G1 X{corner[0]:.3f} Y{corner[1]:.3f} E{layer * 0.4:.3f}")
    lines += ["M104 S0", "M140 S0", "M84"]
    return parse_gcode("".join(line + "\n" for line in lines))


def run_slicer(
    cfg: SliceConfig,
    mesh_file: Path,
    output_path: Path | None = None,
    *,
    stub: bool = False,
) -> SliceResult:
    """Slice ``mesh_file`` to gcode, via the stub or the external slicer.

    Raises :class:`SlicerNotFoundError` when the executable is missing and
    :class:`SliceError` on a nonzero exit or an empty output file.
    """
    mesh_file = Path(mesh_file)
    if output_path is None:
        output_path = mesh_file.with_suffix(".gcode")
    output_path = Path(output_path)
    if stub:
        mesh = parse_stl(mesh_file.read_bytes())
        doc = stub_slice(mesh, cfg)
        output_path.write_text(serialize_gcode(doc))
        return SliceResult(
            gcode_path=output_path, slicer_exit_code=0, log="stub slicer"
        )
    argv = build_command(cfg, mesh_file, output_path)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise SlicerNotFoundError(f"slicer executable not found: {argv[0]}") from exc
    log = proc.stdout + proc.stderr
    if proc.returncode != 0:
        raise SliceError(
            f"slicer exited with code {proc.returncode}: {log.strip()}"
        )
    if not output_path.exists() or output_path.stat().st_size == 0:
        raise SliceError(f"slicer produced no output at {output_path}")
    return SliceResult(gcode_path=output_path, slicer_exit_code=0, log=log)
