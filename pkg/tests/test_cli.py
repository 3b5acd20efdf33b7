from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from droopcert.cli import main
from droopcert.dataset import DroopDataset
from droopcert.freqresp import default_grid
from droopcert.units import GflPllParams, GfmDroopParams, gfl_srf_pll_tf, gfm_droop_tf

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="module")
def datasets(tmp_path_factory):
    d = tmp_path_factory.mktemp("ds")
    grid = default_grid()
    paths = {}
    for name, tf in (("gfm", gfm_droop_tf(GfmDroopParams(0.05, 0.05))), ("gfl", gfl_srf_pll_tf(GflPllParams())),
                     ("fast", gfm_droop_tf(GfmDroopParams(0.05, 0.001)))):
        paths[name] = d / f"{name}.json"
        DroopDataset.from_tf(name, tf, grid).save(paths[name])
    return paths


def run(*argv):
    return main([str(a) for a in argv])


def test_identify_writes_outputs_and_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = CONFIGS / "identify_gfm.yaml"
    assert run("identify", "--config", cfg, "--out", a, "--grid", "1,10,4") == 0
    assert run("identify", "--config", cfg, "--out", b, "--grid", "1,10,4") == 0
    for name in ("dataset.json", "bode.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(DroopDataset.load(a / "dataset.json")) == 4


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DROOPCERT_OUT", str(tmp_path / "env"))
    assert run("identify", "--config", CONFIGS / "identify_gfm.yaml", "--grid", "1,2,2") == 0
    assert (tmp_path / "env" / "dataset.json").is_file()


def test_certify_exit_codes(tmp_path, datasets):
    cfg = CONFIGS / "certify_nyquist.yaml"
    assert run("certify", "--config", cfg, "--dataset", datasets["gfm"], "--robust", "--out", tmp_path / "g") == 0
    assert run("certify", "--config", cfg, "--dataset", datasets["gfl"], "--robust", "--out", tmp_path / "l") == 1
    cert = json.loads((tmp_path / "l" / "certificate.json").read_text())
    assert cert["feasible"] is False and cert["violations"]
    assert (tmp_path / "g" / "nyquist.csv").is_file()


def test_certify_literal_rating_infeasible(tmp_path, datasets):
    assert run("certify", "--config", CONFIGS / "certify_literal.yaml", "--dataset", datasets["gfm"],
               "--out", tmp_path) == 1


def test_missing_dataset_is_input_error(tmp_path, capsys):
    assert run("certify", "--config", CONFIGS / "certify_nyquist.yaml", "--dataset", tmp_path / "nope.json",
               "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_malformed_config_is_input_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("envelope: [unclosed\n")
    assert run("certify", "--config", bad, "--out", tmp_path) == 2
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    assert run("minl", "--config", lst, "--out", tmp_path) == 2
    assert run("identify", "--config", tmp_path / "missing.yaml", "--out", tmp_path) == 2


@pytest.mark.filterwarnings("ignore:combined phase crosses")
def test_bounds_pass_and_fail(tmp_path, datasets):
    cfg = CONFIGS / "bounds_low_gain.yaml"
    assert run("bounds", "--config", cfg, "--dataset", datasets["fast"], "--out", tmp_path / "f") == 0
    assert run("bounds", "--config", cfg, "--dataset", datasets["gfl"], "--out", tmp_path / "l") == 1
    rep = json.loads((tmp_path / "l" / "compliance.json").read_text())
    failing = {s["segment"] for s in rep["per_segment"] if s["violating_f_hz"]}
    assert "R3b" in failing
    for name in ("template.json", "overlay.csv"):
        assert (tmp_path / "f" / name).is_file()


def test_bounds_svg_is_byte_stable(tmp_path, datasets):
    pytest.importorskip("matplotlib")
    cfg = CONFIGS / "bounds_low_gain.yaml"
    for d in ("a", "b"):
        assert run("bounds", "--config", cfg, "--dataset", datasets["fast"], "--svg", "--out", tmp_path / d) == 0
    assert (tmp_path / "a" / "overlay.svg").read_bytes() == (tmp_path / "b" / "overlay.svg").read_bytes()


def test_perf_and_minl(tmp_path):
    ds = tmp_path / "vsm.json"
    from droopcert.units import VsmParams, vsm_tf

    DroopDataset.from_tf("vsm", vsm_tf(VsmParams(2.0, 20.0)), default_grid()).save(ds)
    assert run("perf", "--config", CONFIGS / "perf_vsm.yaml", "--dataset", ds, "--out", tmp_path) == 0
    assert set(json.loads((tmp_path / "perf.json").read_text())) == {"steady_state", "transient", "inertia"}
    for cfg in ("minl_transient.yaml", "minl_inertia.yaml"):
        assert run("minl", "--config", CONFIGS / cfg, "--out", tmp_path / cfg) == 0
        assert (tmp_path / cfg / "contour.csv").is_file()


def test_oracle_network_and_random(tmp_path):
    assert run("oracle", "--network", CONFIGS / "network_two_bus.json", "--out", tmp_path / "n") == 0
    assert run("oracle", "--config", CONFIGS / "oracle_random.yaml", "--seed", 3, "--out", tmp_path / "r") == 0
    res = json.loads((tmp_path / "r" / "spectrum.json").read_text())
    assert res["stable"] is True and res["reference_mode_excluded"] is True


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "droopcert", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "certify" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "droopcert", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
