"""Task-execution experiments: trials, offset grid, campaign aggregation.

One trial with one finger pair runs 28 experiments: the regular task with
the pair's own object, the same task with the other two objects, one
grasp-stability test, and 24 single-axis offset variants of the regular
task.  A campaign repeats that per trial and finger type (10 trials x 3
types = 840 experiments) and aggregates a success table.

Determinism: every experiment draws from its own rng stream seeded by
(campaign seed, trial, finger type, experiment index), so one experiment's
outcome never shifts another's draws.  That per-experiment isolation is
what makes the monotone-envelope property testable: shrinking a tolerance
envelope can only turn individual successes into failures.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .inventory import Magazine, MagazineKind
from .qfe import QfePhase, QfeUnit, qfe_attach, qfe_detach
from .robot import (
    FailureModel,
    Pose,
    PoseOffset,
    Skill,
    SkillKind,
    grasp_displacement,
    moved_significantly,
    run_sequence,
)

__all__ = [
    "OBJECT_KINDS",
    "ExperimentCategory",
    "ExperimentResult",
    "ManipulationObject",
    "OffsetSpec",
    "SuccessTable",
    "TableCell",
    "TaskStation",
    "TrialReport",
    "emit_report",
    "generate_offset_grid",
    "grasp_stability_experiment",
    "regular_task_steps",
    "run_campaign",
    "run_trial",
]

# Canonical object order; also the finger-type vocabulary.
OBJECT_KINDS = ("key", "ethernet_cable", "battery")

POSITION_OFFSETS_MM = (1.0, 2.0, 3.0, 4.0, 5.0)
ROTATION_OFFSETS_DEG = (5.0, 10.0, 15.0)
AXES = ("x", "y", "z")
PUSH_FORCE_N = 5.0
KEY_TURN_ANGLE_DEG = 90.0

# Fixed rng sub-stream tags so the attach/detach draws never collide with
# the 28 experiment streams (0..27).
_ATTACH_STREAM = 1000
_DETACH_STREAM = 1001


@dataclass(frozen=True)
class ManipulationObject:
    """One of the three test-station objects."""

    kind: str
    requires_turn: bool

    def __post_init__(self) -> None:
        if self.kind not in OBJECT_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.requires_turn != (self.kind == "key"):
            raise ValueError("only the key requires a turn step")

    @classmethod
    def of_kind(cls, kind: str) -> "ManipulationObject":
        return cls(kind=kind, requires_turn=kind == "key")


@dataclass(frozen=True)
class OffsetSpec:
    """Single-axis grasp-approach error: position (mm) or rotation (deg)."""

    axis: str
    kind: str
    magnitude: float

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.kind == "position":
            allowed = POSITION_OFFSETS_MM
        elif self.kind == "rotation":
            allowed = ROTATION_OFFSETS_DEG
        else:
            raise ValueError(f"kind must be position or rotation, got {self.kind!r}")
        if self.magnitude not in allowed:
            raise ValueError(
                f"{self.kind} magnitude must be one of {allowed}, "
                f"got {self.magnitude}"
            )

    def to_pose_offset(self) -> PoseOffset:
        # Magnitudes are applied along the positive axis direction.
        vector = np.zeros(3)
        vector[AXES.index(self.axis)] = self.magnitude
        if self.kind == "position":
            return PoseOffset(position_mm=vector)
        return PoseOffset(rotation_deg=vector)

    @property
    def label(self) -> str:
        unit = "mm" if self.kind == "position" else "deg"
        return f"offset_{self.kind}_{self.axis}_{self.magnitude:g}{unit}"


class ExperimentCategory:
    REGULAR = "regular"
    NON_REGULAR = "non_regular"
    GRASP_STABILITY = "grasp_stability"
    OFFSET = "offset"


@dataclass(frozen=True)
class ExperimentResult:
    category: str
    finger_type: str
    object_kind: str
    success: bool
    detail: str = ""
    offset: OffsetSpec | None = None

    @property
    def label(self) -> str:
        """Distinct experiment kind, 28 per finger type."""
        if self.category == ExperimentCategory.NON_REGULAR:
            return f"non_regular_{self.object_kind}"
        if self.category == ExperimentCategory.OFFSET:
            return self.offset.label
        return self.category

    def to_dict(self) -> dict:
        payload = {
            "category": self.category,
            "finger_type": self.finger_type,
            "object_kind": self.object_kind,
            "success": self.success,
            "detail": self.detail,
            "label": self.label,
        }
        if self.offset is not None:
            payload["offset"] = {
                "axis": self.offset.axis,
                "kind": self.offset.kind,
                "magnitude": self.offset.magnitude,
            }
        return payload


@dataclass(frozen=True)
class TrialReport:
    trial_index: int
    finger_type: str
    results: tuple[ExperimentResult, ...]
    attach_ok: bool
    detach_ok: bool
    valid: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "results", tuple(self.results))
        if self.valid:
            counts = self.partition_counts()
            expected = {
                ExperimentCategory.REGULAR: 1,
                ExperimentCategory.NON_REGULAR: 2,
                ExperimentCategory.GRASP_STABILITY: 1,
                ExperimentCategory.OFFSET: 24,
            }
            if counts != expected:
                raise ValueError(f"bad trial partition {counts}, want {expected}")

    def partition_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for result in self.results:
            counts[result.category] = counts.get(result.category, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "finger_type": self.finger_type,
            "attach_ok": self.attach_ok,
            "detach_ok": self.detach_ok,
            "valid": self.valid,
            "results": [result.to_dict() for result in self.results],
        }


def generate_offset_grid() -> list[OffsetSpec]:
    """All 24 single-axis offsets: 3 axes x 5 positions, 3 axes x 3 rotations."""
    grid = [
        OffsetSpec(axis, "position", magnitude)
        for axis in AXES
        for magnitude in POSITION_OFFSETS_MM
    ]
    grid.extend(
        OffsetSpec(axis, "rotation", magnitude)
        for axis in AXES
        for magnitude in ROTATION_OFFSETS_DEG
    )
    return grid


# Nominal task-station poses.  Success probabilities do not depend on
# them; they anchor displacement checks and transcripts.
_STORAGE_POSE = Pose.at(100.0, 50.0, 20.0)
_TARGET_SLOT_POSE = Pose.at(140.0, 50.0, 20.0)
_RING_POSE = Pose.at(120.0, 90.0, 25.0)
_QFE_ALIGN_POSE = Pose.at(300.0, 0.0, 80.0)
_QFE_CONTACT_POSE = Pose.at(300.0, 0.0, 55.0)


def regular_task_steps(obj: ManipulationObject) -> list[Skill]:
    """Pick from storage, insert into the slot, pick again, insert back.

    The key gets one extra turn step right after the first insertion.
    """
    steps = [
        Skill(kind=SkillKind.PICK, target=_STORAGE_POSE),
        Skill(kind=SkillKind.INSERT, target=_TARGET_SLOT_POSE),
    ]
    if obj.requires_turn:
        steps.append(
            Skill(
                kind=SkillKind.TURN,
                target=_TARGET_SLOT_POSE,
                parameters={"angle": KEY_TURN_ANGLE_DEG},
            )
        )
    steps.extend(
        [
            Skill(kind=SkillKind.PICK, target=_TARGET_SLOT_POSE),
            Skill(kind=SkillKind.INSERT, target=_STORAGE_POSE),
        ]
    )
    return steps


def _run_task_experiment(
    category: str,
    finger_type: str,
    obj: ManipulationObject,
    model: FailureModel,
    rng: np.random.Generator,
    offset: OffsetSpec | None = None,
) -> ExperimentResult:
    steps = regular_task_steps(obj)
    pose_offset = offset.to_pose_offset() if offset is not None else None
    success, results = run_sequence(
        steps, model, rng, finger_type=finger_type, offset=pose_offset
    )
    transcript = "; ".join(
        f"{r.kind.value}:{'ok' if r.success else 'fail'}" for r in results
    )
    return ExperimentResult(
        category=category,
        finger_type=finger_type,
        object_kind=obj.kind,
        success=success,
        detail=transcript,
        offset=offset,
    )


def grasp_stability_experiment(
    finger_type: str,
    model: FailureModel,
    rng: np.random.Generator,
    injected_slips_mm: Sequence[float | None] = (None, None),
) -> ExperimentResult:
    """Push the grasped object against the ring with 5 N, two directions.

    The decision is purely geometric: the experiment succeeds iff the
    measured displacement stays at or under 5 mm in both directions.
    ``injected_slips_mm`` overrides the measured displacement per
    direction (testing hook for known-slip scenarios).
    """
    if len(injected_slips_mm) != 2:
        raise ValueError("exactly two push directions")
    details = []
    success = True
    for direction, injected in enumerate(injected_slips_mm, start=1):
        skill = Skill(
            kind=SkillKind.PUSH,
            target=_RING_POSE,
            parameters={"force": PUSH_FORCE_N, "direction": float(direction)},
        )
        _, outcomes = run_sequence([skill], model, rng, finger_type=finger_type)
        displacement = grasp_displacement(_RING_POSE, outcomes[0].achieved_pose)
        if injected is not None:
            displacement = float(injected)
        moved = moved_significantly(displacement)
        if moved:
            success = False
        details.append(
            f"direction {direction}: {displacement:.3f} mm"
            + (" (moved)" if moved else "")
        )
    return ExperimentResult(
        category=ExperimentCategory.GRASP_STABILITY,
        finger_type=finger_type,
        object_kind=finger_type,
        success=success,
        detail="; ".join(details),
    )


@dataclass
class TaskStation:
    """QFE magazine plus the gripper-side exchange unit."""

    magazine: Magazine
    unit: QfeUnit = field(default_factory=QfeUnit)

    @classmethod
    def for_finger_pairs(cls, finger_types: Iterable[str]) -> "TaskStation":
        types = list(finger_types)
        magazine = Magazine.create(
            "qfe-magazine", MagazineKind.QFE, max(len(types), 1), types
        )
        return cls(magazine=magazine)

    def slot_of(self, finger_type: str) -> int:
        for index, item in enumerate(self.magazine.slots):
            if item == finger_type:
                return index
        raise ValueError(f"no {finger_type!r} finger pair in the QFE magazine")


def _exchange_skills(attach: bool) -> list[Skill]:
    # Align above the trigger tongues, press down to raise the secure
    # stone, then slide the pair in (attach) or out (detach), and depart.
    slide_kind = SkillKind.INSERT if attach else SkillKind.MOVE_TO
    return [
        Skill(kind=SkillKind.MOVE_TO, target=_QFE_ALIGN_POSE),
        Skill(kind=SkillKind.MOVE_TO_CONTACT, target=_QFE_CONTACT_POSE),
        Skill(kind=slide_kind, target=_QFE_CONTACT_POSE),
        Skill(kind=SkillKind.MOVE_TO, target=_QFE_ALIGN_POSE),
    ]


def _stream(seed: int, trial_index: int, finger_type: str, tag: int):
    return np.random.default_rng(
        (seed, trial_index, OBJECT_KINDS.index(finger_type), tag)
    )


def run_trial(
    trial_index: int,
    finger_type: str,
    station: TaskStation,
    model: FailureModel,
    seed: int = 0,
) -> TrialReport:
    """Steps 1-6: attach the pair, run 28 experiments, detach the pair.

    If the previous trial failed to return the pair, it is still locked on
    the gripper; the attach step is then skipped rather than repeated.
    """
    if finger_type not in OBJECT_KINDS:
        raise ValueError(f"unknown finger type {finger_type!r}")
    if station.unit.phase is QfePhase.LOCKED:
        if station.unit.holding != finger_type:
            raise ValueError(
                f"QFE unit already holds {station.unit.holding!r}, "
                f"cannot attach {finger_type!r}"
            )
    else:
        slot = station.slot_of(finger_type)
        attach_rng = _stream(seed, trial_index, finger_type, _ATTACH_STREAM)
        attach_ok, _ = run_sequence(
            _exchange_skills(attach=True), model, attach_rng, finger_type=finger_type
        )
        if not attach_ok:
            return TrialReport(
                trial_index=trial_index,
                finger_type=finger_type,
                results=(),
                attach_ok=False,
                detach_ok=False,
                valid=False,
            )
        qfe_attach(station.unit, station.magazine, slot)

    results: list[ExperimentResult] = []
    experiment_index = 0

    def next_rng():
        nonlocal experiment_index
        stream = _stream(seed, trial_index, finger_type, experiment_index)
        experiment_index += 1
        return stream

    own = ManipulationObject.of_kind(finger_type)
    results.append(
        _run_task_experiment(
            ExperimentCategory.REGULAR, finger_type, own, model, next_rng()
        )
    )
    for other_kind in OBJECT_KINDS:
        if other_kind == finger_type:
            continue
        results.append(
            _run_task_experiment(
                ExperimentCategory.NON_REGULAR,
                finger_type,
                ManipulationObject.of_kind(other_kind),
                model,
                next_rng(),
            )
        )
    results.append(grasp_stability_experiment(finger_type, model, next_rng()))
    for spec in generate_offset_grid():
        results.append(
            _run_task_experiment(
                ExperimentCategory.OFFSET,
                finger_type,
                own,
                model,
                next_rng(),
                offset=spec,
            )
        )

    detach_rng = _stream(seed, trial_index, finger_type, _DETACH_STREAM)
    detach_ok, _ = run_sequence(
        _exchange_skills(attach=False), model, detach_rng, finger_type=finger_type
    )
    if detach_ok:
        qfe_detach(station.unit, station.magazine)

    return TrialReport(
        trial_index=trial_index,
        finger_type=finger_type,
        results=tuple(results),
        attach_ok=True,
        detach_ok=detach_ok,
        valid=True,
    )


@dataclass(frozen=True)
class TableCell:
    finger_type: str
    label: str
    axis: str
    magnitude: str
    successes: int
    attempts: int

    @property
    def rate(self) -> float:
        return self.successes / self.attempts

    def to_row(self) -> dict:
        return {
            "finger_type": self.finger_type,
            "experiment_kind": self.label,
            "axis": self.axis,
            "magnitude": self.magnitude,
            "successes": self.successes,
            "attempts": self.attempts,
            "rate": f"{self.rate:.4f}",
        }


@dataclass(frozen=True)
class SuccessTable:
    cells: tuple[TableCell, ...]

    @classmethod
    def from_reports(cls, reports: Sequence[TrialReport]) -> "SuccessTable":
        if not reports:
            raise ValueError("cannot aggregate an empty report list")
        tallies: dict[tuple[str, str], list[int]] = {}
        extras: dict[tuple[str, str], tuple[str, str]] = {}
        for report in reports:
            for result in report.results:
                key = (result.finger_type, result.label)
                tally = tallies.setdefault(key, [0, 0])
                tally[0] += int(result.success)
                tally[1] += 1
                if result.offset is not None:
                    unit = "mm" if result.offset.kind == "position" else "deg"
                    extras[key] = (
                        result.offset.axis,
                        f"{result.offset.magnitude:g}{unit}",
                    )
        cells = []
        for (finger_type, label), (successes, attempts) in sorted(
            tallies.items(),
            key=lambda item: (
                OBJECT_KINDS.index(item[0][0]),
                _LABEL_ORDER[item[0][1]],
            ),
        ):
            axis, magnitude = extras.get((finger_type, label), ("", ""))
            cells.append(
                TableCell(
                    finger_type=finger_type,
                    label=label,
                    axis=axis,
                    magnitude=magnitude,
                    successes=successes,
                    attempts=attempts,
                )
            )
        return cls(cells=tuple(cells))

    def lookup(self, finger_type: str, label: str) -> TableCell:
        for cell in self.cells:
            if cell.finger_type == finger_type and cell.label == label:
                return cell
        raise KeyError((finger_type, label))


def _canonical_labels() -> dict[str, int]:
    order = [ExperimentCategory.REGULAR]
    order.extend(f"non_regular_{kind}" for kind in OBJECT_KINDS)
    order.append(ExperimentCategory.GRASP_STABILITY)
    order.extend(spec.label for spec in generate_offset_grid())
    return {label: index for index, label in enumerate(order)}


_LABEL_ORDER = _canonical_labels()


def run_campaign(
    trials: int,
    finger_types: Sequence[str],
    model: FailureModel,
    seed: int = 0,
    fresh_pair_per_trial: bool = False,
) -> tuple[list[TrialReport], SuccessTable]:
    """Run ``trials`` trials per finger type and aggregate the table."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    for finger_type in finger_types:
        if finger_type not in OBJECT_KINDS:
            raise ValueError(f"unknown finger type {finger_type!r}")
    stations = {
        finger_type: TaskStation.for_finger_pairs([finger_type])
        for finger_type in finger_types
    }
    reports: list[TrialReport] = []
    for trial_index in range(trials):
        for finger_type in finger_types:
            if fresh_pair_per_trial:
                station = TaskStation.for_finger_pairs([finger_type])
            else:
                station = stations[finger_type]
            reports.append(
                run_trial(trial_index, finger_type, station, model, seed)
            )
    return reports, SuccessTable.from_reports(reports)


_CSV_COLUMNS = (
    "finger_type",
    "experiment_kind",
    "axis",
    "magnitude",
    "successes",
    "attempts",
    "rate",
)


def emit_report(
    reports: Sequence[TrialReport],
    table: SuccessTable,
    format: str,
    destination: Path | None = None,
) -> str:
    """Render the campaign as CSV (aggregate rows) or JSON (full structure).

    Returns the rendered text; writes it to ``destination`` when given.
    """
    if not reports:
        raise ValueError("cannot emit a report for zero trials")
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for cell in table.cells:
            writer.writerow(cell.to_row())
        text = buffer.getvalue()
    elif format == "json":
        text = json.dumps(
            {
                "table": [cell.to_row() for cell in table.cells],
                "trials": [report.to_dict() for report in reports],
            },
            indent=2,
            sort_keys=True,
        ) + "\n"
    else:
        raise ValueError(f"format must be csv or json, got {format!r}")
    if destination is not None:
        Path(destination).write_text(text)
    return text
