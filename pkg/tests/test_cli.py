import json
import os

import pandas as pd
import pytest

import main
from common.errors import ConfigError
from report.ledger import check_entry, records_to_df, write_csv_table, write_json_report
from run_config.schema import RunConfig, config_from_dict, load_config

TOML_CONFIG = """
seed = 7
output_dir = "runs"

[background]
dim = 2
extent = [4.0, 4.0]
n = 8
c = 1.0

[background.family]
kind = "mass"
radius = 1.5
amplitude = 0.5

[parametrix]
kind = "hadamard"

[task]
checks = []
k = 3

[tolerances]
coincidence = 1e-7
"""


def test_config_hash_is_stable():
    assert RunConfig().config_hash == RunConfig().config_hash
    assert config_from_dict({"seed": 1}).config_hash != RunConfig().config_hash
    assert config_from_dict({}).config_hash == RunConfig().config_hash


@pytest.mark.parametrize(
    "raw, message",
    [
        ({"bogus": 1}, "unknown key"),
        ({"background": {"dim": 2, "extent": [4.0, 4.0], "spin": 1}}, "unknown key"),
        ({"background": {"n": 1}}, "must be >= 2"),
        ({"background": {"dim": 3}}, "extent has 2 entries"),
        ({"background": {"family": {"kind": "curvature"}}}, "family kind"),
        ({"parametrix": {"kind": "feynman"}}, "parametrix kind"),
        ({"parametrix": {"nu": -1.0}}, "must be positive"),
        ({"parametrix": "exact"}, "must be a table"),
        ({"tolerances": {"nonsense": 1.0}}, "unknown tolerance"),
    ],
)
def test_config_validation(raw, message):
    with pytest.raises(ConfigError, match=message):
        config_from_dict(raw)


def test_tolerance_lookup():
    config = config_from_dict({"tolerances": {"moller": 1e-8}})
    assert config.tolerance("moller") == 1e-8
    assert config.tolerance("exact") == 1e-12
    with pytest.raises(ConfigError):
        config.tolerance("nonsense")


def test_load_toml_and_json(tmp_path):
    toml_path = tmp_path / "run.toml"
    toml_path.write_text(TOML_CONFIG, encoding="utf-8")
    config = load_config(str(toml_path))
    assert config.seed == 7
    assert config.parametrix.kind == "hadamard"
    assert config.background.family.kind == "mass"
    assert config.task.k == 3
    assert config.tolerance("coincidence") == 1e-7

    json_path = tmp_path / "run.json"
    json_path.write_text(json.dumps(config.to_dict()), encoding="utf-8")
    assert load_config(str(json_path)).config_hash == config.config_hash

    family = config.family(config.lattice())
    assert family.lattice.site_count == 64

    yaml_path = tmp_path / "run.yaml"
    yaml_path.write_text("seed: 1", encoding="utf-8")
    with pytest.raises(ConfigError, match=".json or .toml"):
        load_config(str(yaml_path))
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.toml"))


def test_c_field_file_size_is_checked(tmp_path):
    path = tmp_path / "c.csv"
    pd.DataFrame([[1.0, 2.0]]).to_csv(path, header=False, index=False)
    config = config_from_dict({"background": {"c_field_file": str(path)}})
    with pytest.raises(ConfigError, match="c_field_file holds 2 values"):
        config.geometry()


def test_check_entry_pass_logic():
    assert check_entry("a", "ref", 1e-13, 1e-12)["passed"]
    assert not check_entry("a", "ref", -1e-11, 1e-12)["passed"]
    assert not check_entry("a", "ref", float("nan"), 1.0)["passed"]
    assert not check_entry("a", "ref", None, 1.0)["passed"]
    entry = check_entry("a", "ref", 5.0, None, passed=True, order=2)
    assert entry["passed"] and entry["details"] == {"order": 2}


def test_ledger_files(tmp_path):
    results = [
        {"module": "check_x", "checks": [check_entry("a", "ref", 0.0, 1.0), check_entry("b", "ref", 2.0, 1.0)]},
        {"module": "check_y", "checks": []},
    ]
    df = records_to_df(results)
    assert list(df.columns) == ["module", "check", "reference", "value", "tolerance", "passed"]
    assert df["passed"].tolist() == [True, False]
    assert records_to_df([]).empty

    path = write_json_report(results, RunConfig(), str(tmp_path), timestamp="2026-01-01T00:00:00+00:00")
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    assert payload["config_hash"] == RunConfig().config_hash
    assert payload["timestamp"] == "2026-01-01T00:00:00+00:00"
    assert payload["results"][0]["checks"][1]["value"] == 2.0

    csv_path = write_csv_table([{"spacing": 0.1, "value": 1.0 / 3.0}], str(tmp_path), "sweep.csv")
    assert pd.read_csv(csv_path)["value"].iloc[0] == 1.0 / 3.0


def test_check_modules_are_discovered():
    modules = main.discover_checks()
    assert "check_parametrix" in modules
    assert "fixtures" not in modules
    assert all(m.startswith("check_") for m in modules)


def test_broken_module_is_reported_as_error(tmp_path):
    result = main.run_check_module("check_missing", RunConfig(), str(tmp_path))
    assert result["status"] == "error"
    assert result["checks"] == []


def test_run_checks_writes_the_ledger(tmp_path):
    code = main.run_checks(["check_parametrix"], RunConfig(), str(tmp_path))
    assert code == main.EXIT_PASS
    for name in ("ledger.json", "ledger.csv", "verification_ledger.pdf"):
        assert os.path.exists(tmp_path / name)


def test_run_with_no_checks_passes(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TOML_CONFIG, encoding="utf-8")
    assert main.main(["--config", str(path), "--output", str(tmp_path / "out"), "run"]) == main.EXIT_PASS


def test_unknown_targets_are_configuration_errors(tmp_path, capsys):
    assert main.main(["--output", str(tmp_path), "verify", "bogus"]) == main.EXIT_ERROR
    assert "unknown verify target" in capsys.readouterr().out

    path = tmp_path / "run.json"
    path.write_text(json.dumps({"task": {"checks": ["nonexistent"]}}), encoding="utf-8")
    assert main.main(["--config", str(path), "--output", str(tmp_path), "run"]) == main.EXIT_ERROR


def test_extend_command_writes_json(tmp_path):
    argv = [
        "--output", str(tmp_path), "extend",
        "--alpha", "1.5", "--dim", "3", "--spacing", "0.4", "--half-extent", "6",
    ]
    assert main.main(argv) == main.EXIT_PASS
    with open(tmp_path / "extension.json", encoding="utf-8") as handle:
        payload = json.load(handle)
    assert payload["subtraction_order"] == -1
    assert payload["counterterms_radius_doubling"] == []
    assert payload["config_hash"] == RunConfig().config_hash


def test_parametrix_commands(tmp_path):
    assert main.main(["--output", str(tmp_path), "parametrix", "defect"]) == main.EXIT_PASS
    assert main.main(["--output", str(tmp_path), "parametrix", "build"]) == main.EXIT_PASS
    assert os.path.exists(tmp_path / "parametrix.bin")
    assert main.main(["--output", str(tmp_path), "parametrix", "coincidence"]) == main.EXIT_PASS
    table = pd.read_csv(tmp_path / "coincidence.csv")
    assert list(table.columns) == ["x0", "x1", "W"]
    assert len(table) == 64
