"""Strict JSON config parsing tests."""

from __future__ import annotations

import json
import re

import pytest

from fingercell.config import ConfigError, load_config, parse_config
from fingercell.geometry import write_stl
from fingercell.robot import SkillKind
from fingercell.slicing import AdhesionOption

from conftest import box_mesh


def minimal_document() -> dict:
    return {
        "cell": {
            "designs": {
                "tip-key": {"stl_path": "key.stl", "kind": "key"},
            },
            "placement_box": {"b_x": 40.0, "b_y": 40.0},
            "base_magazines": [
                {
                    "magazine_id": "magazine-A",
                    "capacity": 4,
                    "initial_items": ["base-1", "base-2"],
                }
            ],
            "qfe_magazine": {"magazine_id": "qfe-magazine", "capacity": 4},
        }
    }


@pytest.fixture
def config_dir(tmp_path):
    (tmp_path / "key.stl").write_bytes(write_stl(box_mesh((8.0, 6.0, 10.0))))
    return tmp_path


def write_document(config_dir, document) -> str:
    path = config_dir / "cell.json"
    path.write_text(json.dumps(document))
    return str(path)


class TestMinimalDocument:
    def test_defaults_fill_in(self, config_dir):
        app = load_config(write_document(config_dir, minimal_document()))
        assert app.cell.skill_duration_s == 5.0
        assert app.cell.slice_config.layer_height == 0.2
        assert app.cell.failure_model.default_success == 1.0
        assert app.report.format == "csv"
        assert app.report.out is None

    def test_relative_stl_resolves_against_config_dir(self, config_dir):
        app = load_config(write_document(config_dir, minimal_document()))
        design = app.cell.designs["tip-key"]
        assert design.stl_path == config_dir / "key.stl"

    def test_magazines_parsed(self, config_dir):
        app = load_config(write_document(config_dir, minimal_document()))
        assert app.cell.base_magazines[0].initial_items == ("base-1", "base-2")
        assert app.cell.qfe_magazine.capacity == 4


class TestUnknownKeys:
    @pytest.mark.parametrize(
        "mutate, expected_path",
        [
            (lambda d: d.update(extra=1), "$.extra"),
            (lambda d: d["cell"].update(color="red"), "$.cell.color"),
            (
                lambda d: d["cell"]["designs"]["tip-key"].update(scale=2),
                "$.cell.designs.tip-key.scale",
            ),
            (
                lambda d: d["cell"]["base_magazines"][0].update(size=9),
                "$.cell.base_magazines[0].size",
            ),
            (
                lambda d: d["cell"]["placement_box"].update(b_z=10),
                "$.cell.placement_box.b_z",
            ),
            (lambda d: d.update(slice={"nozzle": 0.4}), "$.slice.nozzle"),
            (lambda d: d.update(failure_model={"luck": 1}), "$.failure_model.luck"),
            (lambda d: d.update(report={"path": "x"}), "$.report.path"),
        ],
    )
    def test_unknown_key_names_its_path(self, config_dir, mutate, expected_path):
        document = minimal_document()
        mutate(document)
        with pytest.raises(ConfigError, match=re.escape(f"unknown key {expected_path}")):
            load_config(write_document(config_dir, document))


class TestTypeAndValueErrors:
    def test_wrong_type_names_path(self, config_dir):
        document = minimal_document()
        document["cell"]["base_magazines"][0]["capacity"] = "four"
        with pytest.raises(ConfigError, match=r"capacity: expected int"):
            load_config(write_document(config_dir, document))

    def test_bool_is_not_a_number(self, config_dir):
        document = minimal_document()
        document["cell"]["skill_duration_s"] = True
        with pytest.raises(ConfigError, match="skill_duration_s"):
            load_config(write_document(config_dir, document))

    def test_missing_required_section(self, config_dir):
        with pytest.raises(ConfigError, match=r"\$\.cell is required"):
            load_config(write_document(config_dir, {}))

    def test_missing_stl_file_reported(self, config_dir):
        document = minimal_document()
        document["cell"]["designs"]["tip-key"]["stl_path"] = "nope.stl"
        with pytest.raises(ConfigError, match="no such STL"):
            load_config(write_document(config_dir, document))

    def test_bad_rotation_length(self, config_dir):
        document = minimal_document()
        document["cell"]["designs"]["tip-key"]["rotation_euler_deg"] = [0, 90]
        with pytest.raises(ConfigError, match="expected 3 angles"):
            load_config(write_document(config_dir, document))

    def test_invalid_json_rejected(self, config_dir):
        path = config_dir / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_missing_file_rejected(self, config_dir):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(config_dir / "absent.json")


class TestSections:
    def test_slice_section(self, config_dir):
        document = minimal_document()
        document["slice"] = {
            "layer_height": 0.3,
            "adhesion_option": "brim",
            "post_print_commands": ["M118 done"],
        }
        app = load_config(write_document(config_dir, document))
        assert app.cell.slice_config.layer_height == 0.3
        assert app.cell.slice_config.adhesion_option is AdhesionOption.BRIM
        assert app.cell.slice_config.post_print_commands == ("M118 done",)

    def test_bad_adhesion_option(self, config_dir):
        document = minimal_document()
        document["slice"] = {"adhesion_option": "glue"}
        with pytest.raises(ConfigError, match="adhesion_option"):
            load_config(write_document(config_dir, document))

    def test_out_of_range_slice_value_names_the_section(self, config_dir):
        document = minimal_document()
        document["slice"] = {"infill_density": 20.0}
        with pytest.raises(ConfigError, match=re.escape("$.slice: infill_density")):
            load_config(write_document(config_dir, document))

    def test_out_of_range_failure_model_value_names_the_section(self, config_dir):
        document = minimal_document()
        document["failure_model"] = {"default_success": 1.5}
        with pytest.raises(ConfigError, match=re.escape("$.failure_model")):
            load_config(write_document(config_dir, document))

    def test_failure_model_section(self, config_dir):
        document = minimal_document()
        document["failure_model"] = {
            "default_success": 0.95,
            "base_success": {"pick": 0.9},
            "envelopes": {
                "key": {"position_mm": [3, 3, 5], "rotation_deg": [10, 10, 5]}
            },
            "out_of_envelope_success": 0.1,
        }
        app = load_config(write_document(config_dir, document))
        model = app.cell.failure_model
        assert model.base_success[SkillKind.PICK] == 0.9
        assert model.envelopes["key"].position_mm.tolist() == [3.0, 3.0, 5.0]
        assert model.out_of_envelope_success == 0.1

    def test_bad_skill_kind_in_base_success(self, config_dir):
        document = minimal_document()
        document["failure_model"] = {"base_success": {"fly": 1.0}}
        with pytest.raises(ConfigError, match="fly: not a skill kind"):
            load_config(write_document(config_dir, document))

    def test_envelope_needs_three_limits(self, config_dir):
        document = minimal_document()
        document["failure_model"] = {
            "envelopes": {"key": {"position_mm": [1, 2]}}
        }
        with pytest.raises(ConfigError, match="3 per-axis limits"):
            load_config(write_document(config_dir, document))

    def test_report_section(self, config_dir):
        document = minimal_document()
        document["report"] = {"format": "json", "out": "campaign.json"}
        app = load_config(write_document(config_dir, document))
        assert app.report.format == "json"
        assert app.report.out == "campaign.json"

    def test_bad_report_format(self, config_dir):
        document = minimal_document()
        document["report"] = {"format": "xml"}
        with pytest.raises(ConfigError, match="csv or json"):
            load_config(write_document(config_dir, document))

    def test_print_durations_and_api_key(self, config_dir):
        document = minimal_document()
        document["cell"]["print_durations"] = {"key": 10.0}
        document["cell"]["api_key"] = "sekrit"
        document["cell"]["poll_interval_s"] = 2.5
        app = load_config(write_document(config_dir, document))
        assert app.cell.print_durations == {"key": 10.0}
        assert app.cell.api_key == "sekrit"
        assert app.cell.poll_interval_s == 2.5


class TestParseConfigDirect:
    def test_accepts_plain_mapping(self, config_dir):
        app = parse_config(minimal_document(), base_dir=config_dir)
        assert "tip-key" in app.cell.designs

    def test_non_mapping_rejected(self):
        with pytest.raises(ConfigError, match=r"\$: expected dict"):
            parse_config(["not", "a", "dict"])
