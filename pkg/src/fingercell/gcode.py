"""Gcode parsing and the two mandatory safety edits.

The printer's finger-holder sits on the build plate, so a full homing cycle
or a bed-leveling probe sweep would crash the print head into it.  Two edits
keep prints safe on a Marlin-dialect machine:

  * every bare ``G28`` (no axis words) becomes a configurable safe homing
    sequence, ``G28 X Y`` by default, so the Z axis never probes over the
    holder;
  * every ``G29`` and every leveling-enable ``M420`` (``S1``) is removed;
    ``M420 S0`` already disables leveling and is left alone.

Everything else round-trips byte for byte.  An untouched document
serializes to its exact input; once an edit fires, line endings are
normalized to ``\\n``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

__all__ = [
    "EditReport",
    "EditRules",
    "GcodeDocument",
    "GcodeLine",
    "append_post_print",
    "apply_safety_edits",
    "parse_gcode",
    "serialize_gcode",
]

_COMMAND_RE = re.compile(r"^\s*(?P<word>[GMT]\d+(?:\.\d+)?)(?P<rest>(?:\s|$).*)?$",
                         re.IGNORECASE)
_ARG_RE = re.compile(r"([A-Z])\s*([-+]?\d*\.?\d+)?", re.IGNORECASE)

_AXIS_WORDS = frozenset("XYZ")


@dataclass(frozen=True)
class GcodeLine:
    """One line: the raw text (no terminator) plus the recognized command."""

    raw: str
    command: str | None = None
    args: dict[str, float | None] = field(default_factory=dict)

    @classmethod
    def parse(cls, raw: str) -> "GcodeLine":
        code = raw.split(";", 1)[0]
        m = _COMMAND_RE.match(code)
        if not m:
            return cls(raw=raw)
        word = m.group("word").upper()
        args: dict[str, float | None] = {}
        for letter, value in _ARG_RE.findall(m.group("rest") or ""):
            args[letter.upper()] = float(value) if value else None
        return cls(raw=raw, command=word, args=args)

    def is_bare_home(self, home_command: str) -> bool:
        return self.command == home_command and not (_AXIS_WORDS & self.args.keys())


@dataclass(frozen=True)
class GcodeDocument:
    """Ordered line sequence.  ``source_text`` survives until the first edit."""

    lines: tuple[GcodeLine, ...]
    source_text: str | None = None

    @property
    def modified(self) -> bool:
        return self.source_text is None


@dataclass(frozen=True)
class EditRules:
    """Dialect knobs for the safety edits (defaults fit Marlin)."""

    home_command: str = "G28"
    safe_homing_replacement: str = "G28 X Y"
    leveling_commands: tuple[str, ...] = ("G29",)
    leveling_toggle_command: str = "M420"


@dataclass(frozen=True)
class EditReport:
    homing_lines_modified: int = 0
    leveling_lines_removed: int = 0
    post_print_lines_appended: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "homing_lines_modified": self.homing_lines_modified,
            "leveling_lines_removed": self.leveling_lines_removed,
            "post_print_lines_appended": self.post_print_lines_appended,
        }


def parse_gcode(text: str) -> GcodeDocument:
    """Total parser: every line is kept, recognized or not."""
    lines = tuple(GcodeLine.parse(raw) for raw in text.splitlines())
    return GcodeDocument(lines=lines, source_text=text)


def serialize_gcode(doc: GcodeDocument) -> str:
    """Exact input for untouched documents, ``\\n``-joined lines otherwise."""
    if doc.source_text is not None:
        return doc.source_text
    if not doc.lines:
        return ""
    return "\n".join(line.raw for line in doc.lines) + "\n"


def _enables_leveling(line: GcodeLine, rules: EditRules) -> bool:
    if line.command in rules.leveling_commands:
        return True
    return line.command == rules.leveling_toggle_command and line.args.get("S") == 1


def apply_safety_edits(
    doc: GcodeDocument, rules: EditRules = EditRules()
) -> tuple[GcodeDocument, EditReport]:
    """Replace bare homing lines and strip leveling lines.

    Returns the input document unchanged (still byte-exact) when no line
    matches either rule.
    """
    out: list[GcodeLine] = []
    homing = 0
    leveling = 0
    for line in doc.lines:
        if line.is_bare_home(rules.home_command):
            out.append(GcodeLine.parse(rules.safe_homing_replacement))
            homing += 1
        elif _enables_leveling(line, rules):
            leveling += 1
        else:
            out.append(line)
    report = EditReport(homing_lines_modified=homing, leveling_lines_removed=leveling)
    if homing == 0 and leveling == 0:
        return doc, report
    return GcodeDocument(lines=tuple(out), source_text=None), report


def append_post_print(doc: GcodeDocument, commands: list[str]) -> GcodeDocument:
    """Append commands verbatim, one per line, after all existing content."""
    if not commands:
        return doc
    added = tuple(GcodeLine.parse(c) for c in commands)
    return GcodeDocument(lines=doc.lines + added, source_text=None)
