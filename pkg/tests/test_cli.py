import json

import pytest

from pmelab.bundled import bundled_scenario, list_bundled
from pmelab.cli import main
from pmelab.scenarios import ScenarioError, load_scenario, validate_scenario


def test_list_bundled_contains_the_corpus():
    names = {name for name, _ in list_bundled()}
    assert "barenblatt-convergence" in names
    assert "wiener-puncture-vs-slit" in names
    assert "degiorgi-barenblatt" in names
    for _, desc in list_bundled():
        assert desc      # every scenario explains what it exercises


def test_bundled_scenarios_validate():
    for name, _ in list_bundled():
        validate_scenario(bundled_scenario(name))


def test_unknown_bundled_name():
    with pytest.raises(KeyError):
        bundled_scenario("no-such-scenario")


def test_schema_violation_names_field(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "operation": {"kind": "nope"}}))
    with pytest.raises(ScenarioError, match="operation"):
        load_scenario(bad)


def test_cli_list_and_run(tmp_path, capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "constant-solve" in out
    code = main(["run", "--bundled", "constant-solve",
                 "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "constant-solve" / "report.json")
                        .read_text())
    assert report["all_pass"]
    assert (tmp_path / "constant-solve" / "field.csv").exists()


def test_cli_exit_codes(tmp_path):
    assert main(["run", "--bundled", "no-such", "--out", str(tmp_path)]) == 2
    missing = tmp_path / "missing.json"
    assert main(["run", "--scenario", str(missing),
                 "--out", str(tmp_path)]) == 2


def test_cli_subcommand_guards_operation_kind(tmp_path):
    doc = bundled_scenario("constant-solve")
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert main(["solve", "--scenario", str(path),
                 "--out", str(tmp_path)]) == 0
    assert main(["wiener", "--scenario", str(path),
                 "--out", str(tmp_path)]) == 2


def test_cli_failing_check_returns_one(tmp_path):
    doc = bundled_scenario("constant-solve")
    doc["operation"] = {
        "kind": "verify-barrier",
        "barrier": {"kind": "earliest_super", "c": 1.0, "j": 1,
                    "m": 2.0, "n": 2, "diam": 1.0},
        "expect": "certified",      # j = 1 is insufficient: check must fail
    }
    path = tmp_path / "fail.json"
    path.write_text(json.dumps(doc))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path)]) == 1


def test_cli_verify_barrier_direct_flags(tmp_path):
    code = main(["verify-barrier", "--kind", "quadratic_sub", "--c", "1.0",
                 "--j", "3", "--m", "2.0", "--n", "2", "--diam", "2.0",
                 "--out", str(tmp_path)])
    assert code == 0


def test_reruns_are_byte_identical(tmp_path):
    for sub in ("a", "b"):
        code = main(["run", "--bundled", "scaling-exactness",
                     "--out", str(tmp_path / sub), "--seed", "42"])
        assert code == 0
    ra = (tmp_path / "a" / "scaling-exactness" / "report.json").read_text()
    rb = (tmp_path / "b" / "scaling-exactness" / "report.json").read_text()
    ja, jb = json.loads(ra), json.loads(rb)
    ja.pop("wall_time_s"), jb.pop("wall_time_s")
    ja["artifacts"] = jb["artifacts"] = None
    assert ja == jb
    # CSV artifacts byte-identical
    a_csv = sorted((tmp_path / "a" / "scaling-exactness").glob("*.csv"))
    b_csv = sorted((tmp_path / "b" / "scaling-exactness").glob("*.csv"))
    assert [p.read_bytes() for p in a_csv] == [p.read_bytes() for p in b_csv]


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PMELAB_OUT", str(tmp_path / "envout"))
    assert main(["run", "--bundled", "constant-solve"]) == 0
    assert (tmp_path / "envout" / "constant-solve" / "report.json").exists()


def test_threads_flag_keeps_campaign_deterministic(tmp_path):
    doc = bundled_scenario("comparison-campaign")
    doc["operation"]["trials"] = 6
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    outs = []
    for sub, threads in (("t1", "1"), ("t2", "2")):
        code = main(["run", "--scenario", str(path), "--threads", threads,
                     "--out", str(tmp_path / sub)])
        assert code == 0
        rep = json.loads((tmp_path / sub / "comparison-campaign" /
                          "report.json").read_text())
        outs.append(rep["campaign"])
    assert outs[0] == outs[1]


def test_resolution_override(tmp_path):
    code = main(["run", "--bundled", "constant-solve",
                 "--out", str(tmp_path), "--resolution", "0.125"])
    assert code == 0
    rows = (tmp_path / "constant-solve" / "field.csv").read_text().splitlines()
    # 8x8 grid instead of 16x16: bottom level has 64 cells
    assert len([r for r in rows if r.startswith("0,")]) == 64
