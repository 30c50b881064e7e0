import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from conftest import TABLE2

import mdapportion
from mdapportion.cli import main

DATA = Path(mdapportion.__file__).parent / "data"
INST = ["--candidates", str(DATA / "example_candidates.csv"), "--districts", str(DATA / "example_districts.csv")]


def _seats(path):
    out = np.zeros((3, 6, 2), dtype=int)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out["D1 D2 D3".split().index(row["district"]), "ABCDEF".index(row["list"]), "FM".index(row["gender"])] = int(row["seats"])
    return out


@pytest.fixture(scope="module")
def tpm_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("tpm")
    assert main(["apportion", "--method", "tpm", *INST, "--out", str(out)]) == 0
    return out


def test_apportion_tpm_writes_table2(tpm_out):
    assert np.array_equal(_seats(tpm_out / "seats.csv"), TABLE2)
    summary = json.loads((tpm_out / "summary.json").read_text())
    assert summary["achieved_deviation"] == [0, 0, 0]
    manifest = json.loads((tpm_out / "manifest.json").read_text())
    assert manifest["subcommand"] == "apportion"
    assert len(manifest["inputs"]) == 2
    assert (tpm_out / "audit.jsonl").read_text().strip()
    with open(tpm_out / "elected.csv") as fh:
        assert sum(r["elected"] in ("1", "true") for r in csv.DictReader(fh)) == 33


def test_apportion_is_byte_identical(tmp_path, tpm_out):
    assert main(["apportion", "--method", "tpm", *INST, "--out", str(tmp_path)]) == 0
    for name in ("seats.csv", "elected.csv", "summary.json", "audit.jsonl"):
        assert (tmp_path / name).read_bytes() == (tpm_out / name).read_bytes()


def test_certify_own_output_passes(tpm_out, capsys):
    code = main(["certify", "--method", "tpm", *INST, "--apportionment", str(tpm_out / "seats.csv"), "--alpha", "0,0,0"])
    assert code == 0
    assert "FAIL" not in capsys.readouterr().out


def test_certify_ccm_fails_under_tpm(tmp_path, capsys):
    assert main(["apportion", "--method", "ccm", *INST, "--out", str(tmp_path)]) == 0
    code = main(["certify", "--method", "tpm", *INST, "--apportionment", str(tmp_path / "seats.csv"), "--alpha", "0,0,0"])
    assert code == 2
    assert "FAIL" in capsys.readouterr().out


def test_certify_hand_edited_tensor_names_tuple(tmp_path, tpm_out, capsys):
    rows = list(csv.reader(open(tpm_out / "seats.csv")))
    for r in rows[1:]:
        if r[:3] == ["D1", "A", "F"]:
            r[3] = str(int(r[3]) - 1)
        if r[:3] == ["D1", "A", "M"]:
            r[3] = str(int(r[3]) + 1)
    bad = tmp_path / "bad.csv"
    with open(bad, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    code = main(["certify", "--method", "tpm", *INST, "--apportionment", str(bad)])
    assert code == 2
    assert "D1" in capsys.readouterr().out


def test_mismatched_house_size_exits_1(tmp_path, capsys):
    d = tmp_path / "d.csv"
    d.write_text((DATA / "example_districts.csv").read_text().replace("D3,12", "D3,11"))
    code = main(["--json-errors", "apportion", "--method", "tpm3", "--candidates",
                 str(DATA / "example_candidates.csv"), "--districts", str(d), "--house-size", "33"])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 1


def test_dhondt_subcommand(capsys):
    assert main(["dhondt", "--votes", "2185206,196122,2627586,551946,160686,173682", "--seats", "33",
                 "--labels", "A,B,C,D,E,F"]) == 0
    out = capsys.readouterr().out
    assert "A,2185206,13" in out and "C,2627586,15" in out


def test_fairshare_subcommand(tmp_path):
    assert main(["fairshare", "--method", "tpm", *INST, "--out", str(tmp_path)]) == 0
    with open(tmp_path / "fairshare.csv") as fh:
        total = sum(float(r["value"]) for r in csv.DictReader(fh))
    assert total == pytest.approx(33)


def test_evaluate_subcommand(tmp_path, tpm_out, capsys):
    assert main(["evaluate", "--method", "tpm", *INST, "--elected", str(tpm_out / "elected.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    rep = rep["reports"][0]
    assert rep["global_gallagher"] == pytest.approx(2.7279, abs=1e-3)
    assert main(["evaluate", "--method", "all", *INST, "--csv-only"]) == 0
    assert capsys.readouterr().out.startswith("method,metric,district,value")


def test_simulate_subcommand_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--model", "3", "--runs", "2", "--seed", "5", "--out", str(out)]) == 0
    assert (a / "histogram.csv").read_bytes() == (b / "histogram.csv").read_bytes()
    assert (a / "histogram.csv").read_text().startswith("method,deviation,count")


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "mdapportion.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert mdapportion.__version__ in res.stdout


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["apportion", "--bogus"])
    assert exc.value.code == 2
