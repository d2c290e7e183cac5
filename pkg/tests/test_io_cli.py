import csv
import io
import math
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from bssbf.cli import main, shipped_specs
from bssbf.harness import CSV_COLUMNS, load_spec
from bssbf.io import load_profile, profile_from_dict, profile_to_dict, save_profile
from bssbf.scenario import AngleGrid, SpatialProfile, apply_angle_mismatch, make_uniform_grid, make_uniform_profile


def _one_beam_profile(path):
    grid = AngleGrid(np.array([-0.5, 0.5]))
    save_profile(path, SpatialProfile(np.array([[1.0, 0.0]])), grid)
    return path


@given(seed=st.integers(0, 2**32 - 1), mismatch=st.booleans())
def test_profile_round_trip_exact(seed, mismatch):
    rng = np.random.default_rng(seed)
    grid = make_uniform_grid(12, rng)
    prof = make_uniform_profile(grid, 3, 4, rng)
    if mismatch:
        prof = apply_angle_mismatch(prof, 0.5, rng)
    doc = json.loads(json.dumps(profile_to_dict(prof, grid)))
    back, g2 = profile_from_dict(doc)
    np.testing.assert_array_equal(back.power, prof.power)
    np.testing.assert_array_equal(g2.sines, grid.sines)
    if mismatch:
        support = prof.power.sum(0) > 0
        np.testing.assert_array_equal(back.offsets[support], prof.offsets[support])


def test_profile_bad_format(tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"format": "other", "grid_sines": [], "users": []}))
    with pytest.raises(ValueError):
        load_profile(p)


def test_shipped_specs_load():
    names = shipped_specs()
    for required in ("p_sweep", "k_sweep", "delta_sweep", "tau_sweep", "cluster", "opt_benchmark"):
        assert required in names
    for path in names.values():
        load_spec(path)


def test_validate_exits_zero(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS" in out


def test_rate_one_beam_unit_snr(tmp_path, capsys):
    p = _one_beam_profile(tmp_path / "one.json")
    assert main(["rate", str(p), "--assign", "0", "--gamma", "1"]) == 0
    assert capsys.readouterr().out.strip() == "0.8603"


def test_rate_json_and_out_file(tmp_path):
    p = _one_beam_profile(tmp_path / "one.json")
    out = tmp_path / "r.json"
    assert main(["--format", "json", "rate", str(p), "--assign", "0", "--gamma", "1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["sum_rate"] == pytest.approx(math.e * special.exp1(1.0) / math.log(2), rel=1e-12)


def test_rate_rejects_bad_assignment(tmp_path, capsys):
    p = _one_beam_profile(tmp_path / "one.json")
    assert main(["rate", str(p), "--assign", "0;1", "--gamma", "1"]) == 2
    assert "assign" in capsys.readouterr().err


def test_select_prints_assignment(tmp_path, capsys):
    rng = np.random.default_rng(0)
    grid = make_uniform_grid(8, rng)
    save_profile(tmp_path / "p.json", make_uniform_profile(grid, 2, 3, rng), grid)
    assert main(["select", str(tmp_path / "p.json"), "--method", "exhaustive", "--beams", "2", "--seed", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("user 0:") and out[1].startswith("user 1:") and out[2].startswith("sum-rate")
    beams = [int(b) for line in out[:2] for b in line.split(":")[1].split()]
    assert len(beams) == len(set(beams)) == 4


def test_malformed_spec_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "x"\ntrials = -3\n')
    assert main(["run", str(bad)]) != 0
    assert "trials" in capsys.readouterr().err
    bad.write_text('[scenario]\nnum_users = "eight"\n')
    assert main(["validate", str(bad)]) != 0
    assert "scenario.num_users" in capsys.readouterr().err


def test_run_small_spec_csv(tmp_path, capsys):
    spec = tmp_path / "s.toml"
    spec.write_text(
        'name = "s"\ntrials = 2\ndraws = 20\n[scenario]\nkind = "uniform"\nnum_antennas = 8\ngrid_len = 8\n'
        'num_users = 2\npaths_per_user = 3\n[sweep]\nvariable = "P"\nvalues = [0, 20]\n'
        '[[methods]]\nname = "bs-sbf-fs"\n[[methods]]\nname = "baseline2"\n')
    assert main(["run", str(spec), "--seed", "5"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4 and all(r["seed"] == "5" for r in rows)
    assert main(["--format", "json", "run", str(spec), "--out", str(tmp_path / "o.jsonl")]) == 0
    recs = [json.loads(x) for x in (tmp_path / "o.jsonl").read_text().splitlines()]
    assert len(recs) == 4 and recs[0]["method"] == "bs-sbf-fs-G1"


def test_run_opt_benchmark_rows(capsys):
    assert main(["run", "opt_benchmark"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 150
    methods = {r["method"] for r in rows}
    assert methods == {"bs-sbf-fs-G2", "bs-sbf-gibbs-G2", "bs-sbf-exhaustive-G2"}
    for m in methods:
        assert sum(r["method"] == m for r in rows) == 50
