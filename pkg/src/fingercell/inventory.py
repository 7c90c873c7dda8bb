"""Magazines and finger production records.

A magazine is a fixed-capacity row of slots holding finger bases or
finished finger pairs.  A FingerRecord tracks one produced finger through
its five production timestamps; the timestamps must stay monotone in
production order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

__all__ = [
    "FingerRecord",
    "FingerStatus",
    "InventoryError",
    "Magazine",
    "MagazineKind",
    "TIMESTAMP_ORDER",
]

TIMESTAMP_ORDER = (
    "base_picked",
    "inserted_locked",
    "print_started",
    "print_finished",
    "stored_in_qfe",
)


class InventoryError(Exception):
    """Illegal magazine or record operation."""


class MagazineKind(enum.Enum):
    FINGER_BASE = "finger_base"
    QFE = "qfe"


class FingerStatus(enum.Enum):
    IN_PRODUCTION = "in_production"
    READY = "ready"
    FAILED = "failed"


@dataclass
class Magazine:
    magazine_id: str
    kind: MagazineKind
    slots: list[Any | None]

    @classmethod
    def create(
        cls, magazine_id: str, kind: MagazineKind, capacity: int, items: list = ()
    ) -> "Magazine":
        if capacity < 1:
            raise InventoryError(f"capacity must be >= 1, got {capacity}")
        if len(items) > capacity:
            raise InventoryError(
                f"{len(items)} items exceed capacity {capacity}"
            )
        slots: list[Any | None] = list(items) + [None] * (capacity - len(items))
        return cls(magazine_id=magazine_id, kind=kind, slots=slots)

    @property
    def capacity(self) -> int:
        return len(self.slots)

    @property
    def occupied_count(self) -> int:
        return sum(1 for slot in self.slots if slot is not None)

    def _check_index(self, index: int) -> None:
        if not 0 <= index < len(self.slots):
            raise InventoryError(
                f"{self.magazine_id}: slot {index} out of range 0..{len(self.slots) - 1}"
            )

    def is_occupied(self, index: int) -> bool:
        self._check_index(index)
        return self.slots[index] is not None

    def take(self, index: int) -> Any:
        self._check_index(index)
        item = self.slots[index]
        if item is None:
            raise InventoryError(f"{self.magazine_id}: slot {index} is empty")
        self.slots[index] = None
        return item

    def put(self, index: int, item: Any) -> None:
        self._check_index(index)
        if item is None:
            raise InventoryError("cannot store None in a magazine slot")
        if self.slots[index] is not None:
            raise InventoryError(
                f"{self.magazine_id}: slot {index} is already occupied"
            )
        self.slots[index] = item

    def first_occupied_index(self) -> int | None:
        for index, slot in enumerate(self.slots):
            if slot is not None:
                return index
        return None

    def first_free_index(self) -> int | None:
        for index, slot in enumerate(self.slots):
            if slot is None:
                return index
        return None


@dataclass
class FingerRecord:
    finger_id: str
    base_id: str
    fingertip_design_id: str
    printer_id: str
    timestamps: dict[str, float] = field(default_factory=dict)
    status: FingerStatus = FingerStatus.IN_PRODUCTION

    def stamp(self, name: str, time: float) -> None:
        """Record a production timestamp; order and monotonicity enforced."""
        if name not in TIMESTAMP_ORDER:
            raise InventoryError(f"unknown timestamp {name!r}")
        if name in self.timestamps:
            raise InventoryError(f"timestamp {name!r} already set")
        position = TIMESTAMP_ORDER.index(name)
        for existing, value in self.timestamps.items():
            existing_position = TIMESTAMP_ORDER.index(existing)
            if existing_position > position:
                raise InventoryError(
                    f"cannot set {name!r} after later stamp {existing!r}"
                )
            if value > time:
                raise InventoryError(
                    f"{name!r} at {time} would precede {existing!r} at {value}"
                )
        self.timestamps[name] = float(time)

    def mark_ready(self) -> None:
        missing = [name for name in TIMESTAMP_ORDER if name not in self.timestamps]
        if missing:
            raise InventoryError(
                f"finger {self.finger_id} cannot be ready; missing {missing}"
            )
        self.status = FingerStatus.READY

    def mark_failed(self) -> None:
        self.status = FingerStatus.FAILED

    def to_dict(self) -> dict:
        return {
            "finger_id": self.finger_id,
            "base_id": self.base_id,
            "fingertip_design_id": self.fingertip_design_id,
            "printer_id": self.printer_id,
            "timestamps": dict(self.timestamps),
            "status": self.status.value,
        }
