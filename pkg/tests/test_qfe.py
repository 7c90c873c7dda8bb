"""QFE transition legality, inventory conservation, record timestamps."""

from __future__ import annotations

from itertools import product

import numpy as np
import pytest

from fingercell.inventory import (
    FingerRecord,
    FingerStatus,
    InventoryError,
    Magazine,
    MagazineKind,
)
from fingercell.qfe import (
    IllegalTransitionError,
    QfeError,
    QfePhase,
    QfeUnit,
    qfe_attach,
    qfe_detach,
)

PHASES = list(QfePhase)


def finger(tag="f1"):
    return FingerRecord(
        finger_id=tag, base_id=f"base-{tag}", fingertip_design_id="key",
        printer_id="printer-a",
    )


def unit_in(phase: QfePhase) -> QfeUnit:
    holding = finger("held") if phase is QfePhase.LOCKED else None
    return QfeUnit(unit_id="u", phase=phase, holding=holding)


def magazine(items=(), capacity=4) -> Magazine:
    return Magazine.create("qfe-mag", MagazineKind.QFE, capacity, list(items))


class TestTransitionTable:
    def test_exhaustive_five_by_five(self):
        # Adjacent chain steps (either direction) are the only legal moves.
        for source, target in product(PHASES, PHASES):
            unit = unit_in(source)
            distance = abs(PHASES.index(source) - PHASES.index(target))
            if distance == 1:
                unit.step(target)
                assert unit.phase is target
            else:
                with pytest.raises(IllegalTransitionError):
                    unit.step(target)
                assert unit.phase is source

    def test_close_before_contact_is_illegal(self):
        unit = unit_in(QfePhase.ALIGNED_ABOVE_TONGUES)
        with pytest.raises(IllegalTransitionError):
            unit.step(QfePhase.FINGERS_INSERTED)

    def test_holding_requires_locked(self):
        with pytest.raises(QfeError, match="holding"):
            QfeUnit(phase=QfePhase.IDLE, holding=finger())
        with pytest.raises(QfeError, match="holding"):
            QfeUnit(phase=QfePhase.LOCKED, holding=None)


class TestAttach:
    def test_happy_path(self):
        pair = finger()
        mag = magazine([pair])
        unit = QfeUnit()
        qfe_attach(unit, mag)
        assert unit.phase is QfePhase.LOCKED
        assert unit.holding is pair
        assert mag.occupied_count == 0

    def test_explicit_slot(self):
        a, b = finger("a"), finger("b")
        mag = magazine([a, b])
        unit = QfeUnit()
        qfe_attach(unit, mag, slot_index=1)
        assert unit.holding is b
        assert mag.slots[0] is a

    def test_attach_requires_idle(self):
        mag = magazine([finger()])
        for phase in PHASES[1:]:
            with pytest.raises(QfeError, match="idle"):
                qfe_attach(unit_in(phase), mag)

    def test_empty_slot_rejected(self):
        mag = magazine([finger()])
        with pytest.raises(QfeError, match="empty"):
            qfe_attach(QfeUnit(), mag, slot_index=2)

    def test_empty_magazine_rejected(self):
        with pytest.raises(QfeError, match="no occupied slot"):
            qfe_attach(QfeUnit(), magazine())


class TestDetach:
    def locked_unit(self, pair):
        return QfeUnit(unit_id="u", phase=QfePhase.LOCKED, holding=pair)

    def test_happy_path(self):
        pair = finger()
        mag = magazine()
        unit = self.locked_unit(pair)
        qfe_detach(unit, mag)
        assert unit.phase is QfePhase.IDLE
        assert unit.holding is None
        assert mag.slots[0] is pair

    def test_detach_requires_locked(self):
        for phase in PHASES[:-1]:
            with pytest.raises(QfeError, match="locked"):
                qfe_detach(unit_in(phase), magazine())

    def test_occupied_slot_rejected(self):
        mag = magazine([finger("old")])
        with pytest.raises(QfeError, match="occupied"):
            qfe_detach(self.locked_unit(finger()), mag, slot_index=0)

    def test_full_magazine_rejected(self):
        mag = magazine([finger("a"), finger("b")], capacity=2)
        with pytest.raises(QfeError, match="no free slot"):
            qfe_detach(self.locked_unit(finger()), mag)

    def test_attach_detach_round_trip(self):
        pair = finger()
        mag = magazine([pair])
        unit = QfeUnit()
        before_slots = list(mag.slots)
        qfe_attach(unit, mag, slot_index=0)
        qfe_detach(unit, mag, slot_index=0)
        assert mag.slots == before_slots
        assert unit.phase is QfePhase.IDLE
        assert unit.holding is None


class TestConservation:
    def test_thousand_random_operations(self):
        rng = np.random.default_rng(20250825)
        fingers = [finger(f"f{i}") for i in range(6)]
        magazines = [
            magazine(fingers[:3], capacity=5),
            magazine(fingers[3:], capacity=5),
        ]
        units = [QfeUnit(unit_id=f"u{i}") for i in range(2)]

        def locations():
            spots = []
            for mag in magazines:
                spots.extend(s for s in mag.slots if s is not None)
            spots.extend(u.holding for u in units if u.holding is not None)
            return spots

        for _ in range(1000):
            unit = units[rng.integers(2)]
            mag = magazines[rng.integers(2)]
            slot = int(rng.integers(5))
            snapshot = (
                [list(m.slots) for m in magazines],
                [(u.phase, u.holding) for u in units],
            )
            try:
                if rng.random() < 0.5:
                    qfe_attach(unit, mag, slot_index=slot)
                else:
                    qfe_detach(unit, mag, slot_index=slot)
            except QfeError:
                # A rejected operation must leave all state untouched.
                assert snapshot == (
                    [list(m.slots) for m in magazines],
                    [(u.phase, u.holding) for u in units],
                )
            spots = locations()
            assert len(spots) == 6
            assert {f.finger_id for f in spots} == {f"f{i}" for i in range(6)}
            for u in units:
                assert (u.holding is not None) == (u.phase is QfePhase.LOCKED)


class TestMagazine:
    def test_create_and_counts(self):
        mag = Magazine.create("m", MagazineKind.FINGER_BASE, 4, ["b1", "b2"])
        assert mag.capacity == 4
        assert mag.occupied_count == 2
        assert mag.slots == ["b1", "b2", None, None]

    def test_take_and_put(self):
        mag = Magazine.create("m", MagazineKind.FINGER_BASE, 2, ["b1"])
        assert mag.take(0) == "b1"
        with pytest.raises(InventoryError, match="empty"):
            mag.take(0)
        mag.put(1, "b2")
        with pytest.raises(InventoryError, match="occupied"):
            mag.put(1, "b3")

    def test_index_range_checked(self):
        mag = Magazine.create("m", MagazineKind.QFE, 2)
        for index in (-1, 2, 99):
            with pytest.raises(InventoryError, match="out of range"):
                mag.take(index)
            with pytest.raises(InventoryError, match="out of range"):
                mag.is_occupied(index)

    def test_first_indices(self):
        mag = Magazine.create("m", MagazineKind.QFE, 3)
        assert mag.first_occupied_index() is None
        assert mag.first_free_index() == 0
        mag.put(1, "x")
        assert mag.first_occupied_index() == 1

    def test_overfull_create_rejected(self):
        with pytest.raises(InventoryError):
            Magazine.create("m", MagazineKind.QFE, 1, ["a", "b"])

    def test_none_not_storable(self):
        mag = Magazine.create("m", MagazineKind.QFE, 1)
        with pytest.raises(InventoryError):
            mag.put(0, None)


class TestFingerRecord:
    def test_stamp_happy_path(self):
        record = finger()
        for index, name in enumerate(
            ("base_picked", "inserted_locked", "print_started",
             "print_finished", "stored_in_qfe")
        ):
            record.stamp(name, 10.0 * index)
        record.mark_ready()
        assert record.status is FingerStatus.READY

    def test_duplicate_stamp_rejected(self):
        record = finger()
        record.stamp("base_picked", 1.0)
        with pytest.raises(InventoryError, match="already set"):
            record.stamp("base_picked", 2.0)

    def test_out_of_order_stamp_rejected(self):
        record = finger()
        record.stamp("print_started", 5.0)
        with pytest.raises(InventoryError, match="later stamp"):
            record.stamp("base_picked", 1.0)

    def test_time_regression_rejected(self):
        record = finger()
        record.stamp("base_picked", 10.0)
        with pytest.raises(InventoryError, match="precede"):
            record.stamp("inserted_locked", 9.0)

    def test_equal_times_allowed(self):
        record = finger()
        record.stamp("base_picked", 10.0)
        record.stamp("inserted_locked", 10.0)

    def test_ready_requires_all_stamps(self):
        record = finger()
        record.stamp("base_picked", 1.0)
        with pytest.raises(InventoryError, match="missing"):
            record.mark_ready()

    def test_unknown_stamp_rejected(self):
        with pytest.raises(InventoryError, match="unknown"):
            finger().stamp("coffee_break", 1.0)

    def test_to_dict_round_trip_fields(self):
        record = finger("f9")
        record.stamp("base_picked", 3.0)
        payload = record.to_dict()
        assert payload["finger_id"] == "f9"
        assert payload["timestamps"] == {"base_picked": 3.0}
        assert payload["status"] == "in_production"
