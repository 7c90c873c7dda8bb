"""Quick-finger-exchange state machine.

Attaching finger bases to the gripper walks a five-phase chain:

  idle -> aligned_above_tongues -> contact_force_applied
       -> fingers_inserted -> locked

The gripper must press on the magazine trigger tongues (raising the
spring-loaded secure stone) before fingers can slide in, so the chain may
only be traversed one adjacent phase at a time; skipping any phase is
illegal.  Detaching walks the same chain backwards.  The held finger pair
changes hands exactly at the inserted/locked boundary, which keeps every
finger in exactly one place at all times.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .inventory import Magazine

__all__ = ["IllegalTransitionError", "QfeError", "QfePhase", "QfeUnit",
           "qfe_attach", "qfe_detach"]


class QfeError(Exception):
    """Illegal QFE operation."""


class IllegalTransitionError(QfeError):
    """Phase change that skips a step in the exchange chain."""


class QfePhase(enum.Enum):
    IDLE = "idle"
    ALIGNED_ABOVE_TONGUES = "aligned_above_tongues"
    CONTACT_FORCE_APPLIED = "contact_force_applied"
    FINGERS_INSERTED = "fingers_inserted"
    LOCKED = "locked"


_CHAIN = (
    QfePhase.IDLE,
    QfePhase.ALIGNED_ABOVE_TONGUES,
    QfePhase.CONTACT_FORCE_APPLIED,
    QfePhase.FINGERS_INSERTED,
    QfePhase.LOCKED,
)


@dataclass
class QfeUnit:
    """Phase plus the held finger; holding is non-empty iff locked."""

    unit_id: str = "qfe-unit"
    phase: QfePhase = QfePhase.IDLE
    holding: object | None = None

    def __post_init__(self) -> None:
        self._check_holding()

    def _check_holding(self) -> None:
        if (self.holding is not None) != (self.phase is QfePhase.LOCKED):
            raise QfeError(
                f"{self.unit_id}: holding must be set exactly in phase locked "
                f"(phase={self.phase.value}, holding={self.holding!r})"
            )

    def step(self, target: QfePhase) -> None:
        """Move one adjacent phase along the chain, either direction."""
        here = _CHAIN.index(self.phase)
        there = _CHAIN.index(target)
        if abs(here - there) != 1:
            raise IllegalTransitionError(
                f"{self.unit_id}: illegal transition "
                f"{self.phase.value} -> {target.value}"
            )
        self.phase = target


def qfe_attach(unit: QfeUnit, magazine: Magazine, slot_index: int | None = None) -> QfeUnit:
    """Walk the attach sequence, taking the finger from the magazine slot.

    The finger leaves its slot at the inserted -> locked transition (the
    lift that drops the secure stone onto the tongue).
    """
    if unit.phase is not QfePhase.IDLE:
        raise QfeError(
            f"{unit.unit_id}: attach requires phase idle, not {unit.phase.value}"
        )
    if slot_index is None:
        slot_index = magazine.first_occupied_index()
        if slot_index is None:
            raise QfeError(f"{magazine.magazine_id}: no occupied slot to attach from")
    if not magazine.is_occupied(slot_index):
        raise QfeError(f"{magazine.magazine_id}: slot {slot_index} is empty")
    unit.step(QfePhase.ALIGNED_ABOVE_TONGUES)
    unit.step(QfePhase.CONTACT_FORCE_APPLIED)
    unit.step(QfePhase.FINGERS_INSERTED)
    unit.holding = magazine.take(slot_index)
    unit.step(QfePhase.LOCKED)
    unit._check_holding()
    return unit


def qfe_detach(unit: QfeUnit, magazine: Magazine, slot_index: int | None = None) -> QfeUnit:
    """Walk the attach sequence backwards, storing the finger in the slot."""
    if unit.phase is not QfePhase.LOCKED:
        raise QfeError(
            f"{unit.unit_id}: detach requires phase locked, not {unit.phase.value}"
        )
    if slot_index is None:
        slot_index = magazine.first_free_index()
        if slot_index is None:
            raise QfeError(f"{magazine.magazine_id}: no free slot to detach into")
    if magazine.is_occupied(slot_index):
        raise QfeError(
            f"{magazine.magazine_id}: slot {slot_index} is already occupied"
        )
    unit.step(QfePhase.FINGERS_INSERTED)
    magazine.put(slot_index, unit.holding)
    unit.holding = None
    unit.step(QfePhase.CONTACT_FORCE_APPLIED)
    unit.step(QfePhase.ALIGNED_ABOVE_TONGUES)
    unit.step(QfePhase.IDLE)
    unit._check_holding()
    return unit
