import json

import pytest

from colltune.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_passes_and_negative_control_fails(capsys):
    code, out, err = run(capsys, "validate", "--P-max", "20")
    assert code == 0
    doc = json.loads(out)
    assert doc["passed"] and doc["max_relative_deviation"] <= 1e-9
    assert json.loads(err.splitlines()[0])["command"] == "validate"
    code, out, _ = run(capsys, "validate", "--P-max", "10", "--corrupt-chain")
    assert code == 1 and not json.loads(out)["passed"]


def test_simulate_without_noise_matches_models(capsys, tmp_path):
    out_csv = tmp_path / "r.csv"
    code, _, _ = run(capsys, "simulate", "--algorithms", "BcastChain", "--M", "10", "--segment-sizes", "8192", "-o", str(out_csv))
    assert code == 0
    rows = out_csv.read_text().splitlines()[1:]
    assert len(rows) == 10


def test_simulate_rejects_tiny_plan(capsys):
    code, _, err = run(capsys, "simulate", "--M", "0")
    assert code == 2 and "--M" in err


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_fit_round_trip_and_determinism(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    outputs = []
    for _ in range(2):
        assert run(capsys, "simulate", "--seed", "3", "--profile", str(_planted_file(tmp_path)), "-o", "r.csv", "--gamma-out", "g.csv")[0] == 0
        code, _, err = run(capsys, "fit", "--records", "r.csv", "--gamma", "g.csv", "-o", "p.json")
        assert code == 0 and "condition=" in err
        outputs.append(((tmp_path / "r.csv").read_bytes(), (tmp_path / "p.json").read_bytes()))
    assert outputs[0] == outputs[1]
    doc = json.loads(outputs[0][1])
    assert doc["algorithms"]["BcastChain"]["alpha"] == pytest.approx(1.1e-5, rel=1e-6)


def _planted_file(tmp_path):
    from colltune.io import save_profile
    from conftest import planted_profile

    path = tmp_path / "planted.json"
    save_profile(planted_profile(), path)
    return path


def test_fit_empty_csv_is_input_error(capsys, tmp_path):
    (tmp_path / "e.csv").write_text("")
    (tmp_path / "g.csv").write_text("p,repetitions,segment_bytes,time_sec,run_id\n2,1,8192,1.0,\n")
    code, _, err = run(capsys, "fit", "--records", str(tmp_path / "e.csv"), "--gamma", str(tmp_path / "g.csv"))
    assert code == 2 and "empty" in err


def test_select_and_tables(capsys, tmp_path):
    code, out, _ = run(capsys, "select", "--op", "bcast", "--P", "90", "--m", "4194304", "--candidates", "BcastBinary", "BcastBinomial")
    assert code == 0 and json.loads(out)["chosen"] == "BcastBinary"
    plot = tmp_path / "plot.csv"
    code, out, _ = run(capsys, "decision-table", "--op", "gather", "--P-values", "40", "90", "--emit-plot-data", str(plot))
    assert code == 0 and out.splitlines()[0].startswith("P,65536,")
    assert plot.read_text().splitlines()[0] == "P,m_bytes,GatherLinear,GatherLinearSync,GatherBinomial"
    code, out, _ = run(capsys, "compare-baseline")
    rows = json.loads(out)["rows"]
    assert len(rows) == 10 and all(r["disagree"] for r in rows)


def test_select_with_missing_profile_file(capsys, tmp_path):
    code, _, err = run(capsys, "select", "--op", "gather", "--P", "4", "--m", "10", "--profile", str(tmp_path / "none.json"))
    assert code == 2 and "error" in err
