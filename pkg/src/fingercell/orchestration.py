"""Production cell coordinator: robot, two printers, magazines, event log.

Producing one finger runs the full cycle: pick a finger base from its
magazine, insert and lock it into the printer's finger-holder, run the
geometry/slicing/gcode pipeline, upload and start the print, wait for it,
then pick the finished finger and store it in the QFE magazine.

Producing a pair starts the second finger's cycle only after the first
print is running (or the first production has failed), which makes the two
print intervals overlap whenever printing outlasts robot handling.  The
single robot is a FIFO resource, so the cycles never use it concurrently.

All waiting runs on the discrete-event scheduler; with a virtual clock a
full pair (including the 337 s and 676 s prints) executes in well under a
second of wall time and yields a byte-identical event log for a given
configuration and seed.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .clock import Clock, VirtualClock
from .gcode import append_post_print, apply_safety_edits, parse_gcode, serialize_gcode
from .geometry import (
    PlacementBox,
    Rotation,
    parse_stl,
    place_on_base,
    rotate_mesh,
    write_stl,
)
from .inventory import FingerRecord, Magazine, MagazineKind
from .mockserver import (
    DEFAULT_DURATIONS,
    FaultPlan,
    MockPrinterConfig,
    MockPrintServer,
)
from .protocol import (
    JobPhase,
    PrinterEndpoint,
    get_job_state,
    next_poll_delay,
    start_job,
    upload_gcode,
)
from .robot import FailureModel, Pose, Skill, SkillKind, execute_skill
from .scheduling import Acquire, Fire, Release, Resource, Scheduler, Signal, Wait, Timeout
from .slicing import SliceConfig, run_slicer, stub_slice

__all__ = [
    "CellConfig",
    "EventLog",
    "FingertipDesign",
    "MILESTONES",
    "MagazineSpec",
    "ProductionCell",
    "ProductionError",
    "ProductionEvent",
    "ReplayVerdict",
    "replay_log",
    "simulated_cell",
]

# Canonical per-finger production milestones, in order.
MILESTONES = (
    "base_picked",
    "inserted_locked",
    "print_started",
    "print_finished",
    "stored_in_qfe",
)


class ProductionError(Exception):
    """Production cannot start (precondition violated)."""


@dataclass(frozen=True)
class ProductionEvent:
    time: float
    actor: str
    subject: str
    action: str

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "actor": self.actor,
            "action": self.action,
            "subject": self.subject,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ProductionEvent":
        return cls(
            time=float(payload["time"]),
            actor=str(payload["actor"]),
            action=str(payload["action"]),
            subject=str(payload["subject"]),
        )


class EventLog:
    """Append-only, time-ordered production event record."""

    def __init__(self) -> None:
        self.events: list[ProductionEvent] = []

    def record(self, time: float, actor: str, action: str, subject: str) -> None:
        if self.events and time < self.events[-1].time:
            raise ValueError(
                f"event at {time} would precede last event at {self.events[-1].time}"
            )
        self.events.append(
            ProductionEvent(time=time, actor=actor, action=action, subject=subject)
        )

    def to_json_lines(self) -> str:
        return "".join(
            json.dumps(event.to_dict(), sort_keys=True) + "\n"
            for event in self.events
        )

    @classmethod
    def from_json_lines(cls, text: str) -> "EventLog":
        log = cls()
        for line in text.splitlines():
            if line.strip():
                log.events.append(ProductionEvent.from_dict(json.loads(line)))
        return log


@dataclass(frozen=True)
class FingertipDesign:
    """One printable fingertip: mesh file, one-time re-orientation, object kind."""

    design_id: str
    stl_path: Path
    rotation_euler_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind: str = "key"

    def __post_init__(self) -> None:
        object.__setattr__(self, "stl_path", Path(self.stl_path))
        object.__setattr__(
            self, "rotation_euler_deg", tuple(float(v) for v in self.rotation_euler_deg)
        )


@dataclass(frozen=True)
class MagazineSpec:
    magazine_id: str
    kind: MagazineKind
    capacity: int
    initial_items: tuple[str, ...] = ()

    def build(self) -> Magazine:
        return Magazine.create(
            self.magazine_id, self.kind, self.capacity, list(self.initial_items)
        )


@dataclass(frozen=True)
class CellConfig:
    """Topology and parameters of one production cell."""

    designs: Mapping[str, FingertipDesign]
    placement_box: PlacementBox
    base_magazines: tuple[MagazineSpec, ...]
    qfe_magazine: MagazineSpec
    slice_config: SliceConfig = field(default_factory=SliceConfig)
    failure_model: FailureModel = field(default_factory=FailureModel)
    skill_duration_s: float = 5.0
    use_stub_slicer: bool = True
    rng_seed: int = 0
    print_durations: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_DURATIONS)
    )
    api_key: str = "mock-key"
    poll_interval_s: float = 5.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "designs", dict(self.designs))
        object.__setattr__(self, "base_magazines", tuple(self.base_magazines))
        object.__setattr__(self, "print_durations", dict(self.print_durations))
        if not self.designs:
            raise ValueError("cell needs at least one fingertip design")
        if not self.base_magazines:
            raise ValueError("cell needs at least one base magazine")
        if self.skill_duration_s < 0:
            raise ValueError("skill_duration_s must be non-negative")
        for design in self.designs.values():
            if not design.stl_path.is_file():
                raise ValueError(
                    f"design {design.design_id!r}: no such STL file {design.stl_path}"
                )


# Nominal station poses; success does not depend on them, but results and
# displacement checks do.
_STATION_POSES = {
    "base_magazine": Pose.at(-300.0, 0.0, 50.0),
    "finger_holder": Pose.at(0.0, 200.0, 30.0),
    "qfe_magazine": Pose.at(300.0, 0.0, 50.0),
}


class ProductionCell:
    """Live state of one cell: magazines, robot, printers, log, records."""

    def __init__(
        self,
        config: CellConfig,
        printers: Mapping[str, PrinterEndpoint],
        clock: Clock,
        work_dir: Path | None = None,
    ) -> None:
        if len(printers) != 2:
            raise ValueError(f"a cell drives exactly two printers, got {len(printers)}")
        self.config = config
        self.printers = dict(printers)
        self.clock = clock
        self.work_dir = Path(work_dir) if work_dir is not None else None
        self.scheduler = Scheduler(clock)
        self.robot = Resource("robot_A")
        self.base_magazines = {
            spec.magazine_id: spec.build() for spec in config.base_magazines
        }
        self.qfe_magazine = config.qfe_magazine.build()
        self.log = EventLog()
        self.records: list[FingerRecord] = []
        self._finger_seq = 0

    # -- bookkeeping -------------------------------------------------

    def _next_finger_id(self) -> str:
        self._finger_seq += 1
        return f"finger-{self._finger_seq:04d}"

    def _finger_rng(self, sequence_number: int) -> np.random.Generator:
        return np.random.default_rng((self.config.rng_seed, sequence_number))

    def _mark(self, record: FingerRecord, actor: str, milestone: str) -> None:
        now = self.clock.now()
        record.stamp(milestone, now)
        self.log.record(now, actor, milestone, record.finger_id)

    def _fail(self, record: FingerRecord, reason: str) -> None:
        record.mark_failed()
        self.log.record(
            self.clock.now(), "coordinator", f"production_failed:{reason}",
            record.finger_id,
        )

    def initial_base_count(self) -> int:
        return sum(len(spec.initial_items) for spec in self.config.base_magazines)

    def remaining_base_count(self) -> int:
        return sum(mag.occupied_count for mag in self.base_magazines.values())

    # -- preconditions -----------------------------------------------

    def _pick_base_magazine(self, preferred_id: str | None) -> Magazine:
        if preferred_id is not None:
            magazine = self.base_magazines[preferred_id]
            if magazine.occupied_count > 0:
                return magazine
        for magazine in self.base_magazines.values():
            if magazine.occupied_count > 0:
                return magazine
        raise ProductionError("no finger base available in any magazine")

    def _check_printer_idle(self, printer_id: str) -> None:
        state = get_job_state(self.printers[printer_id], self.clock)
        if state.phase is not JobPhase.OPERATIONAL:
            raise ProductionError(
                f"{printer_id} is not operational (phase {state.phase.value})"
            )

    def _check_qfe_space(self, needed: int) -> None:
        free = self.qfe_magazine.capacity - self.qfe_magazine.occupied_count
        if free < needed:
            raise ProductionError(
                f"QFE magazine has {free} free slot(s), {needed} needed"
            )

    # -- public operations -------------------------------------------

    def produce_finger(
        self,
        design_id: str,
        printer_id: str,
        base_magazine_id: str | None = None,
    ) -> FingerRecord:
        """Run one full production cycle to completion."""
        self._check_preconditions(design_id, printer_id, base_magazine_id, slots=1)
        process = self.scheduler.spawn(
            self._production_cycle(design_id, printer_id, base_magazine_id),
            name=f"produce-{design_id}",
        )
        self.scheduler.run()
        return process.result

    def produce_finger_pair(
        self, design_a: str, design_b: str
    ) -> tuple[FingerRecord, FingerRecord]:
        """Produce two fingers, the second triggered by the first print start."""
        printer_ids = list(self.printers)
        magazine_ids = [spec.magazine_id for spec in self.config.base_magazines]
        magazine_b = magazine_ids[1] if len(magazine_ids) > 1 else magazine_ids[0]
        self._check_preconditions(design_a, printer_ids[0], magazine_ids[0], slots=2)
        self._check_preconditions(design_b, printer_ids[1], None, slots=2)
        if self.remaining_base_count() < 2:
            raise ProductionError("a finger pair needs at least two bases")
        first_started = Signal(f"{design_a}-print-started")
        process_a = self.scheduler.spawn(
            self._production_cycle(
                design_a, printer_ids[0], magazine_ids[0], fire_on_start=first_started
            ),
            name=f"produce-{design_a}",
        )
        process_b = self.scheduler.spawn(
            self._production_cycle(
                design_b, printer_ids[1], magazine_b, wait_for=first_started
            ),
            name=f"produce-{design_b}",
        )
        self.scheduler.run()
        return process_a.result, process_b.result

    def _check_preconditions(
        self,
        design_id: str,
        printer_id: str,
        base_magazine_id: str | None,
        slots: int,
    ) -> None:
        if design_id not in self.config.designs:
            raise ProductionError(f"unknown fingertip design {design_id!r}")
        if printer_id not in self.printers:
            raise ProductionError(f"unknown printer {printer_id!r}")
        self._pick_base_magazine(base_magazine_id)
        self._check_printer_idle(printer_id)
        self._check_qfe_space(slots)

    # -- the production activity --------------------------------------

    def _production_cycle(
        self,
        design_id: str,
        printer_id: str,
        base_magazine_id: str | None,
        fire_on_start: Signal | None = None,
        wait_for: Signal | None = None,
    ):
        design = self.config.designs[design_id]
        rng = self._finger_rng(self._finger_seq + 1)
        record = FingerRecord(
            finger_id=self._next_finger_id(),
            base_id="",
            fingertip_design_id=design_id,
            printer_id=printer_id,
        )
        self.records.append(record)

        if wait_for is not None:
            yield Wait(wait_for)

        # Robot: pick a base, insert it into the holder, lock the holder.
        yield Acquire(self.robot)
        magazine = self._pick_base_magazine(base_magazine_id)
        record.base_id = magazine.take(magazine.first_occupied_index())
        for kind, station, milestone in (
            (SkillKind.PICK, "base_magazine", "base_picked"),
            (SkillKind.INSERT, "finger_holder", None),
            (SkillKind.PLACE, "finger_holder", "inserted_locked"),
        ):
            yield Timeout(self.config.skill_duration_s)
            result = execute_skill(
                Skill(kind=kind, target=_STATION_POSES[station]),
                self.config.failure_model,
                rng,
            )
            if not result.success:
                self._fail(record, f"robot_{kind.value}")
                yield Release(self.robot)
                if fire_on_start is not None:
                    yield Fire(fire_on_start)
                return record
            if milestone is not None:
                self._mark(record, "robot_A", milestone)
        yield Release(self.robot)

        # Pipeline: place the model, slice, make the gcode safe, upload.
        gcode_name = f"{design.kind}-{record.finger_id}.gcode"
        body = self._prepare_gcode(design, record.finger_id)
        endpoint = self.printers[printer_id]
        upload_gcode(endpoint, gcode_name, body, self.clock)
        start_job(endpoint, gcode_name, self.clock)
        self._mark(record, printer_id, "print_started")
        if fire_on_start is not None:
            yield Fire(fire_on_start)

        # Watch the job; polling naps run on the virtual clock.
        state = get_job_state(endpoint, self.clock)
        while state.phase is JobPhase.PRINTING:
            yield Timeout(next_poll_delay(state, endpoint.poll_interval))
            state = get_job_state(endpoint, self.clock)
        if state.phase is JobPhase.ERROR:
            self.log.record(
                self.clock.now(), printer_id, "print_failed", record.finger_id
            )
            self._fail(record, "print_error")
            return record
        self._mark(record, printer_id, "print_finished")

        # Robot: pick the finished finger, store it in the QFE magazine.
        yield Acquire(self.robot)
        for kind, station, milestone in (
            (SkillKind.PICK, "finger_holder", None),
            (SkillKind.PLACE, "qfe_magazine", "stored_in_qfe"),
        ):
            yield Timeout(self.config.skill_duration_s)
            result = execute_skill(
                Skill(kind=kind, target=_STATION_POSES[station]),
                self.config.failure_model,
                rng,
            )
            if not result.success:
                self._fail(record, f"robot_{kind.value}")
                yield Release(self.robot)
                return record
            if milestone == "stored_in_qfe":
                slot = self.qfe_magazine.first_free_index()
                self.qfe_magazine.put(slot, record)
                self._mark(record, "robot_A", milestone)
        yield Release(self.robot)
        record.mark_ready()
        return record

    def _prepare_gcode(self, design: FingertipDesign, finger_id: str) -> bytes:
        mesh = parse_stl(design.stl_path.read_bytes())
        rotation = Rotation.from_euler_xyz_degrees(*design.rotation_euler_deg)
        placed = place_on_base(rotate_mesh(mesh, rotation), self.config.placement_box)
        if self.config.use_stub_slicer:
            document = stub_slice(placed, self.config.slice_config)
        else:
            if self.work_dir is None:
                raise ProductionError("external slicing requires a work directory")
            mesh_path = self.work_dir / f"{finger_id}.stl"
            mesh_path.write_bytes(write_stl(placed))
            result = run_slicer(self.config.slice_config, mesh_path)
            document = parse_gcode(result.gcode_path.read_text())
        document, _ = apply_safety_edits(document)
        document = append_post_print(
            document, list(self.config.slice_config.post_print_commands)
        )
        return serialize_gcode(document).encode()


@dataclass(frozen=True)
class ReplayVerdict:
    ok: bool
    violation: str | None = None


def _subject_milestones(
    events: list[ProductionEvent],
) -> dict[str, dict[str, float]]:
    subjects: dict[str, dict[str, float]] = {}
    for event in events:
        subjects.setdefault(event.subject, {})[event.action] = event.time
    return subjects


def replay_log(events: Iterable[ProductionEvent]) -> ReplayVerdict:
    """Validate an event log; returns the first violation found, if any.

    Checks: global time ordering, per-finger milestone order and
    monotonicity, inventory conservation (every production attempt ends
    stored or failed), per-printer interval exclusivity, and the pair
    ordering rule (a later finger's first robot action never precedes the
    earlier finger's print start or failure).
    """
    events = list(events)
    for before, after in zip(events, events[1:]):
        if after.time < before.time:
            return ReplayVerdict(
                False,
                f"time order violated: {after.action}@{after.time} after "
                f"{before.action}@{before.time}",
            )

    per_subject: dict[str, list[ProductionEvent]] = {}
    for event in events:
        per_subject.setdefault(event.subject, []).append(event)
    for subject, stream in per_subject.items():
        milestone_indices = [
            MILESTONES.index(e.action) for e in stream if e.action in MILESTONES
        ]
        if milestone_indices != sorted(milestone_indices):
            return ReplayVerdict(
                False, f"{subject}: milestones out of canonical order"
            )
        if len(set(milestone_indices)) != len(milestone_indices):
            return ReplayVerdict(False, f"{subject}: duplicate milestone")
        failed_at = [
            e.time for e in stream if e.action.startswith("production_failed")
        ]
        if failed_at:
            trailing = [e for e in stream if e.time > failed_at[0]]
            if trailing:
                return ReplayVerdict(
                    False, f"{subject}: events after production failure"
                )

    stored = sum(1 for e in events if e.action == "stored_in_qfe")
    failed = sum(1 for e in events if e.action.startswith("production_failed"))
    attempts = len(per_subject)
    if attempts != stored + failed:
        return ReplayVerdict(
            False,
            f"conservation violated: {attempts} attempts, "
            f"{stored} stored + {failed} failed",
        )

    # Per-printer exclusivity: print intervals on one printer never overlap.
    for printer in sorted({e.actor for e in events if e.action == "print_started"}):
        printing = False
        for event in events:
            if event.actor != printer:
                continue
            if event.action == "print_started":
                if printing:
                    return ReplayVerdict(
                        False, f"{printer}: second job started during a print"
                    )
                printing = True
            elif event.action in ("print_finished", "print_failed"):
                printing = False

    # Pair ordering: fingers sorted by first event; each later finger's
    # first event must not precede the previous finger's print start (or
    # failure when it never printed).
    ordered = sorted(per_subject.values(), key=lambda stream: stream[0].time)
    for earlier, later in zip(ordered, ordered[1:]):
        trigger = None
        for event in earlier:
            if event.action == "print_started" or event.action.startswith(
                "production_failed"
            ):
                trigger = event.time
                break
        if trigger is not None and later[0].time < trigger:
            return ReplayVerdict(
                False,
                f"{later[0].subject} started at {later[0].time} before "
                f"{earlier[0].subject} reached print start/failure at {trigger}",
            )

    return ReplayVerdict(True)


@contextmanager
def simulated_cell(
    config: CellConfig,
    printer_ids: tuple[str, str] = ("printer_A", "printer_B"),
    faults: Mapping[str, tuple[FaultPlan, ...]] | None = None,
    clock: Clock | None = None,
) -> Iterator[ProductionCell]:
    """Host two in-process mock printers and yield a ready-to-run cell.

    Print durations, API key, and poll interval come from ``config``; the
    servers share the cell's clock, so a virtual clock fast-forwards the
    prints.
    """
    clock = clock if clock is not None else VirtualClock()
    servers: list[MockPrintServer] = []
    endpoints: dict[str, PrinterEndpoint] = {}
    try:
        for printer_id in printer_ids:
            mock_config = MockPrinterConfig(
                printer_id=printer_id,
                api_key=config.api_key,
                durations=dict(config.print_durations),
                faults=tuple((faults or {}).get(printer_id, ())),
            )
            server = MockPrintServer(mock_config, clock)
            server.start()
            servers.append(server)
            endpoints[printer_id] = PrinterEndpoint(
                server.base_url, config.api_key, config.poll_interval_s
            )
        yield ProductionCell(config, endpoints, clock)
    finally:
        for server in servers:
            server.stop()
