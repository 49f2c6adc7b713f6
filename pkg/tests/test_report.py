import json
import os
import re

import pytest

from nlifem.report import (combined_table_csv, config_hash, csv_columns, fmt, norms_of, read_csv, report_csv,
                           report_svg, write_report)
from nlifem.studies import StudyConfig, run_study


@pytest.fixture(scope="module")
def four_level():
    cfg = StudyConfig(example="ex1", kind="fixed_delta", k=1, levels=[2, 3, 4, 5], delta=[0.25, 0.5])
    return run_study(cfg)


def test_fmt():
    assert fmt(None) == ""
    assert fmt(float("nan")) == "nan"
    assert fmt(1234.5) == "1.23450e+03"


def test_csv_layout(four_level):
    text = report_csv(four_level)
    lines = text.splitlines()
    assert len(lines) == 5
    head = lines[0].split(",")
    assert head[:4] == ["level", "h", "delta1", "delta2"]
    assert head[4:8] == ["err_energy", "rate_energy", "err_l2", "rate_l2"]
    first = dict(zip(head, lines[1].split(",")))
    assert first["rate_energy"] == "" and first["rate_l2"] == ""
    assert norms_of(four_level)[:3] == ["energy", "l2", "max"]
    assert "components" not in csv_columns(four_level)


def test_csv_round_trip(four_level, tmp_path):
    write_report(four_level, tmp_path / "r.csv")
    rows = read_csv(tmp_path / "r.csv")
    for got, want in zip(rows, four_level.rows):
        assert got["h"] == want["h"]
        assert got["err_energy"] == pytest.approx(want["err_energy"], rel=1e-5)
        assert got["delta2"] == want["deltas"][1]


def test_svg_polylines(four_level):
    svg = report_svg(four_level)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert len(re.findall(r'class="norm"', svg)) == len(norms_of(four_level))
    assert len(re.findall(r'class="guide"', svg)) == 2
    assert "log2(h)" in svg


def test_unwritable_path_raises(four_level, tmp_path):
    with pytest.raises(OSError):
        write_report(four_level, tmp_path / "missing" / "r.csv")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        write_report(four_level, blocker / "r.csv")


def test_manifest_lists_existing_files(four_level, tmp_path):
    man = write_report(four_level, tmp_path / "r.csv", tmp_path / "r.svg", tmp_path / "r.png")
    assert len(man.outputs) == 3
    for p in man.outputs:
        assert os.path.getsize(p) > 0
    with open(tmp_path / "r.png", "rb") as fh:
        assert fh.read(8) == b"\x89PNG\r\n\x1a\n"
    man.write(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert set(doc) == {"tool_version", "config_hash", "timestamp", "outputs", "summary", "passed"}
    assert doc["passed"] == four_level.passed
    assert len(doc["config_hash"]) == 64


def test_config_hash_stable():
    a = StudyConfig(k=2)
    assert config_hash(a) == config_hash(StudyConfig(k=2))
    assert config_hash(a) != config_hash(StudyConfig(k=3))


def test_combined_table(four_level):
    other = run_study(StudyConfig(example="ex1", kind="fixed_delta", k=2, levels=[2, 3, 4, 5],
                                  delta=[0.25, 0.5]))
    lines = combined_table_csv([four_level, other]).splitlines()
    assert len(lines) == 5
    assert lines[0].split(",") == ["h", "k1_err_energy", "k1_rate_energy", "k1_err_l2", "k1_rate_l2",
                                   "k2_err_energy", "k2_rate_energy", "k2_err_l2", "k2_rate_l2"]
