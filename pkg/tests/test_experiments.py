"""Experiment harness tests: grid, trials, campaign accounting, reports."""

from __future__ import annotations

import json

import numpy as np
import pytest

from fingercell.experiments import (
    OBJECT_KINDS,
    ExperimentCategory,
    ManipulationObject,
    OffsetSpec,
    SuccessTable,
    TaskStation,
    emit_report,
    generate_offset_grid,
    grasp_stability_experiment,
    regular_task_steps,
    run_campaign,
    run_trial,
)
from fingercell.qfe import QfePhase
from fingercell.robot import FailureModel, SkillKind, ToleranceEnvelope

ALL_SUCCEED = FailureModel()


def flaky(base: float, out: float, envelope: ToleranceEnvelope) -> FailureModel:
    return FailureModel(
        default_success=base,
        out_of_envelope_success=out,
        envelopes={"key": envelope},
    )


class TestOffsetGrid:
    def test_exactly_24_specs(self):
        assert len(generate_offset_grid()) == 24

    def test_partition_15_position_9_rotation(self):
        grid = generate_offset_grid()
        # Independent enumeration: every (axis, kind, magnitude) combination.
        expected = {
            (axis, "position", m) for axis in "xyz" for m in (1, 2, 3, 4, 5)
        } | {(axis, "rotation", m) for axis in "xyz" for m in (5, 10, 15)}
        assert {(s.axis, s.kind, s.magnitude) for s in grid} == expected
        assert sum(1 for s in grid if s.kind == "position") == 15
        assert sum(1 for s in grid if s.kind == "rotation") == 9

    def test_declared_ordering(self):
        grid = generate_offset_grid()
        assert (grid[0].axis, grid[0].kind, grid[0].magnitude) == ("x", "position", 1.0)
        assert (grid[-1].axis, grid[-1].kind, grid[-1].magnitude) == (
            "z",
            "rotation",
            15.0,
        )
        assert grid == generate_offset_grid()

    def test_labels_are_distinct(self):
        labels = [s.label for s in generate_offset_grid()]
        assert len(set(labels)) == 24


class TestOffsetSpec:
    def test_position_magnitudes_restricted(self):
        OffsetSpec("x", "position", 5.0)
        with pytest.raises(ValueError, match="magnitude"):
            OffsetSpec("x", "position", 6.0)

    def test_rotation_magnitudes_restricted(self):
        OffsetSpec("z", "rotation", 15.0)
        with pytest.raises(ValueError, match="magnitude"):
            OffsetSpec("z", "rotation", 7.0)

    def test_axis_and_kind_validated(self):
        with pytest.raises(ValueError, match="axis"):
            OffsetSpec("w", "position", 1.0)
        with pytest.raises(ValueError, match="kind"):
            OffsetSpec("x", "tilt", 1.0)

    def test_pose_offset_is_single_axis(self):
        shift = OffsetSpec("y", "position", 2.0).to_pose_offset()
        assert shift.position_mm.tolist() == [0.0, 2.0, 0.0]
        assert shift.rotation_deg.tolist() == [0.0, 0.0, 0.0]
        tilt = OffsetSpec("z", "rotation", 15.0).to_pose_offset()
        assert tilt.position_mm.tolist() == [0.0, 0.0, 0.0]
        assert tilt.rotation_deg.tolist() == [0.0, 0.0, 15.0]


class TestManipulationObject:
    def test_only_key_turns(self):
        assert ManipulationObject.of_kind("key").requires_turn
        assert not ManipulationObject.of_kind("ethernet_cable").requires_turn
        assert not ManipulationObject.of_kind("battery").requires_turn

    def test_inconsistent_turn_flag_rejected(self):
        with pytest.raises(ValueError, match="turn"):
            ManipulationObject(kind="battery", requires_turn=True)
        with pytest.raises(ValueError, match="turn"):
            ManipulationObject(kind="key", requires_turn=False)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown object kind"):
            ManipulationObject.of_kind("screwdriver")


class TestRegularTaskSteps:
    @pytest.mark.parametrize("kind", ["ethernet_cable", "battery"])
    def test_four_phases_without_turn(self, kind):
        steps = regular_task_steps(ManipulationObject.of_kind(kind))
        assert [s.kind for s in steps] == [
            SkillKind.PICK,
            SkillKind.INSERT,
            SkillKind.PICK,
            SkillKind.INSERT,
        ]

    def test_key_turns_after_first_insertion(self):
        steps = regular_task_steps(ManipulationObject.of_kind("key"))
        kinds = [s.kind for s in steps]
        assert kinds == [
            SkillKind.PICK,
            SkillKind.INSERT,
            SkillKind.TURN,
            SkillKind.PICK,
            SkillKind.INSERT,
        ]
        assert steps[2].parameters["angle"] == 90.0


class TestGraspStability:
    def test_zero_noise_succeeds_with_zero_displacement(self):
        result = grasp_stability_experiment(
            "key", ALL_SUCCEED, np.random.default_rng(0)
        )
        assert result.success
        assert result.detail == "direction 1: 0.000 mm; direction 2: 0.000 mm"

    def test_injected_slip_names_the_direction(self):
        result = grasp_stability_experiment(
            "key",
            ALL_SUCCEED,
            np.random.default_rng(0),
            injected_slips_mm=(None, 6.0),
        )
        assert not result.success
        assert "direction 2: 6.000 mm (moved)" in result.detail
        assert "direction 1: 0.000 mm;" in result.detail

    def test_exactly_5mm_is_not_moved(self):
        result = grasp_stability_experiment(
            "key",
            ALL_SUCCEED,
            np.random.default_rng(0),
            injected_slips_mm=(5.0, 5.0),
        )
        assert result.success

    def test_failed_push_slips_beyond_threshold(self):
        model = FailureModel(base_success={SkillKind.PUSH: 0.0})
        result = grasp_stability_experiment(
            "key", model, np.random.default_rng(3)
        )
        assert not result.success
        assert "(moved)" in result.detail

    def test_requires_two_directions(self):
        with pytest.raises(ValueError, match="two push directions"):
            grasp_stability_experiment(
                "key", ALL_SUCCEED, np.random.default_rng(0), injected_slips_mm=(1.0,)
            )


class TestRunTrial:
    def test_perfect_model_28_of_28(self):
        station = TaskStation.for_finger_pairs(["key"])
        report = run_trial(0, "key", station, ALL_SUCCEED, seed=1)
        assert report.valid and report.attach_ok and report.detach_ok
        assert len(report.results) == 28
        assert all(r.success for r in report.results)
        assert report.partition_counts() == {
            ExperimentCategory.REGULAR: 1,
            ExperimentCategory.NON_REGULAR: 2,
            ExperimentCategory.GRASP_STABILITY: 1,
            ExperimentCategory.OFFSET: 24,
        }

    def test_pair_returned_to_magazine(self):
        station = TaskStation.for_finger_pairs(["battery"])
        run_trial(0, "battery", station, ALL_SUCCEED)
        assert station.magazine.occupied_count == 1
        assert station.unit.phase is QfePhase.IDLE
        assert station.unit.holding is None

    def test_non_regular_uses_the_other_two_objects(self):
        station = TaskStation.for_finger_pairs(["ethernet_cable"])
        report = run_trial(0, "ethernet_cable", station, ALL_SUCCEED)
        non_regular = [
            r.object_kind
            for r in report.results
            if r.category == ExperimentCategory.NON_REGULAR
        ]
        assert non_regular == ["key", "battery"]

    def test_attach_failure_gives_invalid_partial_report(self):
        model = FailureModel(base_success={SkillKind.MOVE_TO_CONTACT: 0.0})
        station = TaskStation.for_finger_pairs(["key"])
        report = run_trial(0, "key", station, model)
        assert not report.valid
        assert not report.attach_ok
        assert report.results == ()
        # Nothing was taken out of the magazine.
        assert station.magazine.occupied_count == 1
        assert station.unit.phase is QfePhase.IDLE

    def test_envelope_governs_out_of_range_offsets(self):
        # y-rotation tolerance below 10 degrees: the 10 and 15 degree
        # y-rotation offsets flip to the (here: zero) out-of-envelope
        # probability; everything else stays certain.
        envelope = ToleranceEnvelope(
            position_mm=(5.0, 5.0, 5.0), rotation_deg=(15.0, 9.0, 15.0)
        )
        model = flaky(1.0, 0.0, envelope)
        station = TaskStation.for_finger_pairs(["key"])
        report = run_trial(0, "key", station, model)
        failed = sorted(r.label for r in report.results if not r.success)
        assert failed == ["offset_rotation_y_10deg", "offset_rotation_y_15deg"]

    def test_fixed_seed_replays_identically(self):
        envelope = ToleranceEnvelope(rotation_deg=(10.0, 10.0, 10.0))
        model = flaky(0.8, 0.1, envelope)

        def once():
            station = TaskStation.for_finger_pairs(["key"])
            return run_trial(3, "key", station, model, seed=42)

        assert once() == once()

    def test_missing_pair_rejected(self):
        station = TaskStation.for_finger_pairs(["battery"])
        with pytest.raises(ValueError, match="no 'key' finger pair"):
            run_trial(0, "key", station, ALL_SUCCEED)

    def test_unknown_finger_type_rejected(self):
        station = TaskStation.for_finger_pairs(["key"])
        with pytest.raises(ValueError, match="unknown finger type"):
            run_trial(0, "claw", station, ALL_SUCCEED)


class TestMonotoneEnvelope:
    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_shrinking_envelope_never_gains_successes(self, seed):
        # Per-experiment rng streams mean each offset experiment sees the
        # same draws under every envelope variant, so success sets can
        # only shrink as the envelope tightens.
        limits = [(5.0, 15.0), (4.0, 12.0), (3.0, 9.0), (2.0, 5.0), (1.0, 4.0)]
        counts = []
        for position_limit, rotation_limit in limits:
            envelope = ToleranceEnvelope(
                position_mm=(position_limit,) * 3,
                rotation_deg=(rotation_limit,) * 3,
            )
            model = flaky(1.0, 0.15, envelope)
            station = TaskStation.for_finger_pairs(["key"])
            report = run_trial(0, "key", station, model, seed=seed)
            counts.append(
                sum(
                    r.success
                    for r in report.results
                    if r.category == ExperimentCategory.OFFSET
                )
            )
        # The widest envelope covers the whole grid, so all 24 succeed.
        assert counts[0] == 24
        assert counts == sorted(counts, reverse=True)
        assert counts[0] > counts[-1]


class TestRunCampaign:
    def test_full_campaign_is_840_experiments(self):
        reports, table = run_campaign(10, list(OBJECT_KINDS), ALL_SUCCEED, seed=5)
        assert len(reports) == 30
        assert sum(len(r.results) for r in reports) == 840
        assert all(cell.attempts == 10 for cell in table.cells)
        assert all(cell.rate == 1.0 for cell in table.cells)

    def test_single_trial_single_type(self):
        reports, table = run_campaign(1, ["battery"], ALL_SUCCEED)
        assert len(reports) == 1
        assert len(reports[0].results) == 28
        assert len(table.cells) == 28

    def test_table_has_84_cells_for_three_types(self):
        _, table = run_campaign(2, list(OBJECT_KINDS), ALL_SUCCEED)
        assert len(table.cells) == 84

    def test_deterministic_given_seed(self):
        envelope = ToleranceEnvelope(position_mm=(3.0, 3.0, 3.0))
        model = flaky(0.9, 0.2, envelope)
        first = run_campaign(3, list(OBJECT_KINDS), model, seed=9)
        second = run_campaign(3, list(OBJECT_KINDS), model, seed=9)
        assert first[0] == second[0]
        assert first[1] == second[1]

    def test_seed_changes_outcomes(self):
        model = FailureModel(default_success=0.7)
        _, table_a = run_campaign(2, ["key"], model, seed=1)
        _, table_b = run_campaign(2, ["key"], model, seed=2)
        rates_a = [c.successes for c in table_a.cells]
        rates_b = [c.successes for c in table_b.cells]
        assert rates_a != rates_b

    def test_fresh_pair_mode_matches_counts(self):
        reports, _ = run_campaign(
            2, list(OBJECT_KINDS), ALL_SUCCEED, fresh_pair_per_trial=True
        )
        assert sum(len(r.results) for r in reports) == 2 * 3 * 28

    def test_input_validation(self):
        with pytest.raises(ValueError, match="trials"):
            run_campaign(0, ["key"], ALL_SUCCEED)
        with pytest.raises(ValueError, match="unknown finger type"):
            run_campaign(1, ["pliers"], ALL_SUCCEED)


class TestSuccessTable:
    def test_row_order_is_canonical(self):
        _, table = run_campaign(1, list(OBJECT_KINDS), ALL_SUCCEED)
        assert table.cells[0].finger_type == "key"
        assert table.cells[0].label == "regular"
        assert table.cells[-1].finger_type == "battery"
        assert table.cells[-1].label == "offset_rotation_z_15deg"
        types_in_order = [c.finger_type for c in table.cells]
        assert types_in_order == sorted(
            types_in_order, key=OBJECT_KINDS.index
        )

    def test_offset_rows_carry_axis_and_magnitude(self):
        _, table = run_campaign(1, ["key"], ALL_SUCCEED)
        cell = table.lookup("key", "offset_position_x_1mm")
        assert (cell.axis, cell.magnitude) == ("x", "1mm")
        regular = table.lookup("key", "regular")
        assert (regular.axis, regular.magnitude) == ("", "")

    def test_empty_reports_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            SuccessTable.from_reports([])


class TestEmitReport:
    def test_csv_has_84_aggregate_rows(self, tmp_path):
        reports, table = run_campaign(2, list(OBJECT_KINDS), ALL_SUCCEED)
        out = tmp_path / "report.csv"
        text = emit_report(reports, table, "csv", out)
        lines = text.splitlines()
        assert lines[0] == "finger_type,experiment_kind,axis,magnitude,successes,attempts,rate"
        assert len(lines) == 1 + 84
        assert out.read_text() == text

    def test_json_mirrors_table_and_trials(self):
        reports, table = run_campaign(1, ["key"], ALL_SUCCEED)
        payload = json.loads(emit_report(reports, table, "json"))
        assert len(payload["table"]) == 28
        assert len(payload["trials"]) == 1
        assert len(payload["trials"][0]["results"]) == 28

    def test_same_campaign_renders_identically(self):
        model = FailureModel(default_success=0.9)

        def render() -> str:
            reports, table = run_campaign(2, list(OBJECT_KINDS), model, seed=3)
            return emit_report(reports, table, "csv")

        assert render() == render()

    def test_bad_format_and_empty_reports(self):
        reports, table = run_campaign(1, ["key"], ALL_SUCCEED)
        with pytest.raises(ValueError, match="format"):
            emit_report(reports, table, "xml")
        with pytest.raises(ValueError, match="zero trials"):
            emit_report([], table, "csv")
