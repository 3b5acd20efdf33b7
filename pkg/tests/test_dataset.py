from __future__ import annotations

import csv
import json
import math

import pytest

from droopcert.dataset import DroopDataset, DroopSample, dumps, fmt


def test_json_round_trip(tmp_path, analytic_tfs, grid):
    ds = DroopDataset.from_tf("gfm", analytic_tfs["gfm"], grid)
    ds.samples[3].ok = False
    ds.samples[3].error = "ill-conditioned"
    path = tmp_path / "ds.json"
    ds.save(path)
    back = DroopDataset.load(path)
    assert back.unit_id == "gfm"
    assert len(back) == len(ds)
    assert not back.samples[3].ok
    assert back.samples[10].m_p == ds.samples[10].m_p
    assert len(back.valid_samples()) == len(ds) - 1


def test_save_is_byte_stable(tmp_path, analytic_tfs, grid):
    ds = DroopDataset.from_tf("vsm", analytic_tfs["vsm"], grid)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    ds.save(a)
    DroopDataset.load(a).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_bode_csv_columns(tmp_path, analytic_tfs, grid):
    ds = DroopDataset.from_tf("gfm", analytic_tfs["gfm"], grid)
    path = tmp_path / "bode.csv"
    ds.write_bode_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0][:3] == ["f_hz", "m_p_gain_db", "m_p_phase_deg"]
    assert float(rows[1][1]) == pytest.approx(20 * math.log10(abs(ds.samples[0].m_p)), abs=1e-9)
    assert len(rows) == 62


def test_rejects_unsorted_and_malformed():
    with pytest.raises(ValueError):
        DroopDataset("x", [DroopSample(2.0, 1j), DroopSample(1.0, 1j)])
    with pytest.raises(ValueError):
        DroopDataset.from_dict({"unit_id": "x", "samples": [{"f_hz": 1.0}]})
    with pytest.raises(ValueError):
        DroopDataset.from_dict({"samples": []})


def test_fixed_formatting():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(math.inf) == "inf"
    assert json.loads(dumps({"a": math.inf, "b": 1j})) == {"a": "inf", "b": {"im": 1.0, "re": 0.0}}
