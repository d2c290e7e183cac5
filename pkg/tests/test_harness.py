import math

import numpy as np
import pytest
from scipy import special

from bssbf.beamforming import BeamAssignment
from bssbf.harness import (CSV_COLUMNS, ExperimentSpec, MethodSpec, SpecError, estimate_ber_bpsk,
                           estimate_ergodic_rates, run_experiment, spec_from_dict, trial_seed)
from bssbf.rate import sum_rate
from bssbf.scenario import (AngleGrid, SpatialProfile, SystemConfig, make_uniform_grid, make_uniform_profile,
                            steering_matrix)


def _single_user(G, gamma, L=8, seed=0):
    rng = np.random.default_rng(seed)
    grid = make_uniform_grid(L, rng)
    power = np.zeros((1, L))
    power[0, :G] = 1.0 / G
    cfg = SystemConfig(num_antennas=L, num_users=1, grid_len=L, beams_per_user=G, total_power=gamma)
    return SpatialProfile(power), grid, cfg, BeamAssignment.of([tuple(range(G))])


def _rayleigh_bpsk(snr):
    return 0.5 * (1 - math.sqrt(snr / (1 + snr)))


def _diversity2_bpsk(snr):
    mu = math.sqrt(snr / (1 + snr))
    return ((1 - mu) / 2) ** 2 * (1 + 2 * (1 + mu) / 2)


def _small_spec(**kw):
    base = dict(name="t", num_antennas=16, grid_len=16, num_users=3, paths_per_user=4, trials=3, draws=50,
                sweep_name="P", sweep_values=(10.0, 30.0),
                methods=(MethodSpec("bs-sbf-fs"), MethodSpec("baseline1"), MethodSpec("zfbf")))
    base.update(kw)
    return ExperimentSpec(**base)


def test_zero_power_rates_zero():
    prof, grid, cfg, asg = _single_user(1, 0.0)
    rep = estimate_ergodic_rates(prof, grid, asg, cfg, 100, np.random.default_rng(0))
    assert rep.sum_rate == 0.0 and np.all(rep.per_user == 0)


def test_single_beam_unit_snr_rate():
    prof, grid, cfg, asg = _single_user(1, 1.0)
    rep = estimate_ergodic_rates(prof, grid, asg, cfg, 1_000_000, np.random.default_rng(1))
    ref = math.e * special.exp1(1.0) / math.log(2)
    assert abs(rep.sum_rate - ref) < 3 * rep.sum_stderr
    assert abs(ref - 0.8603) < 5e-5


@pytest.mark.parametrize("G", [1, 2])
def test_monte_carlo_matches_closed_form(G):
    rng = np.random.default_rng(2)
    grid = make_uniform_grid(16, rng)
    prof = make_uniform_profile(grid, 4, 5, rng)
    cfg = SystemConfig(num_antennas=16, num_users=4, grid_len=16, beams_per_user=G, total_power=400.0)
    perm = rng.permutation(16)
    asg = BeamAssignment.of([perm[G * k:G * (k + 1)] for k in range(4)])
    rep = estimate_ergodic_rates(prof, grid, asg, cfg, 1_000_000, np.random.default_rng(3))
    closed = sum_rate(prof.power, asg, cfg.per_user_power, G)
    assert abs(rep.sum_rate - closed) < 3 * rep.sum_stderr


def test_stderr_scales_with_draws():
    prof, grid, cfg, asg = _single_user(2, 10.0)
    a = estimate_ergodic_rates(prof, grid, asg, cfg, 10_000, np.random.default_rng(4))
    b = estimate_ergodic_rates(prof, grid, asg, cfg, 160_000, np.random.default_rng(5))
    assert abs(a.sum_stderr / b.sum_stderr - 4.0) <= 0.2 * 4.0


def test_precoder_path_matches_beam_path_for_orthogonal_grid():
    # unitary grid: the pseudoinverse basis equals the steering columns
    L = 8
    grid = AngleGrid((2 * np.arange(1, L + 1) - 1 - L) / L)
    power = np.zeros((2, L))
    power[0, [0, 1]] = 0.5
    power[1, [1, 2]] = 0.5
    prof = SpatialProfile(power)
    cfg = SystemConfig(num_antennas=L, num_users=2, grid_len=L, beams_per_user=1, total_power=200.0)
    asg = BeamAssignment.of([(0,), (2,)])
    V = steering_matrix(grid.sines[[0, 2]], L)
    a = estimate_ergodic_rates(prof, grid, asg, cfg, 200_000, np.random.default_rng(6))
    b = estimate_ergodic_rates(prof, grid, V, cfg, 200_000, np.random.default_rng(7))
    assert abs(a.sum_rate - b.sum_rate) < 3 * math.hypot(a.sum_stderr, b.sum_stderr)


def test_ber_noise_free_is_zero():
    prof, grid, cfg, asg = _single_user(1, 1e14)
    rep = estimate_ber_bpsk(prof, grid, asg, cfg, 20_000, np.random.default_rng(8))
    assert rep.mean == 0.0


@pytest.mark.parametrize("snr_db", [0, 10])
def test_ber_single_beam_rayleigh(snr_db):
    gamma = 10 ** (snr_db / 10)
    prof, grid, cfg, asg = _single_user(1, gamma)
    rep = estimate_ber_bpsk(prof, grid, asg, cfg, 300_000, np.random.default_rng(9))
    assert abs(rep.mean - _rayleigh_bpsk(gamma)) < 3 * rep.mean_stderr


@pytest.mark.parametrize("snr_db", [0, 10])
def test_ber_two_beam_diversity(snr_db):
    gamma = 10 ** (snr_db / 10)
    prof, grid, cfg, asg = _single_user(2, gamma)
    rep = estimate_ber_bpsk(prof, grid, asg, cfg, 300_000, np.random.default_rng(10))
    # each branch carries half the power on a beam of variance 1/2
    branch = gamma * 0.5 / 2
    assert abs(rep.mean - _diversity2_bpsk(branch)) < 3 * rep.mean_stderr


def test_ber_rejects_short_runs():
    prof, grid, cfg, asg = _single_user(1, 1.0)
    with pytest.raises(ValueError):
        estimate_ber_bpsk(prof, grid, asg, cfg, 999, np.random.default_rng(0))


def test_trial_seeds_distinct():
    seeds = {trial_seed(7, t) for t in range(1000)}
    assert len(seeds) == 1000
    assert trial_seed(7, 3) == trial_seed(7, 3)


def test_run_is_deterministic():
    spec = _small_spec()
    a, b = run_experiment(spec), run_experiment(spec)
    assert a.to_csv() == b.to_csv()
    assert len(a.rows) == 2 * 3


def test_threads_do_not_change_results():
    spec = _small_spec(trials=2)
    assert run_experiment(spec, threads=2).to_csv() == run_experiment(spec, threads=1).to_csv()


def test_csv_layout():
    table = run_experiment(_small_spec(trials=2))
    lines = table.to_csv().split("\r\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[-1] == ""
    assert len(lines) == 1 + len(table.rows) + 1
    for r in table.rows:
        assert r.trials == 2


def test_stderr_is_sample_std_over_root_trials():
    spec = _small_spec(trials=4, per_trial=True, sweep_values=(20.0,))
    per = run_experiment(spec)
    agg = run_experiment(_small_spec(trials=4, sweep_values=(20.0,)))
    for m in ("bs-sbf-fs-G1", "baseline1", "zfbf"):
        vals = [r.sum_rate for r in per.select(m)]
        assert len(vals) == 4
        row = agg.select(m)[0]
        assert row.sum_rate == pytest.approx(np.mean(vals), rel=1e-12)
        assert row.sum_rate_stderr == pytest.approx(np.std(vals, ddof=1) / 2, rel=1e-12)


def test_per_trial_rows_carry_trial_seed():
    spec = _small_spec(trials=3, per_trial=True, sweep_values=(20.0,), methods=(MethodSpec("bs-sbf-fs"),))
    rows = run_experiment(spec).rows
    assert [r.seed for r in rows] == [trial_seed(0, t) for t in range(3)]
    assert all(r.trials == 1 for r in rows)


def test_power_sweep_increases_rate():
    spec = _small_spec(trials=5, sweep_values=(0.0, 10.0, 20.0, 30.0), methods=(MethodSpec("bs-sbf-fs"),))
    rates = [r.sum_rate for r in run_experiment(spec).rows]
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_crosscheck_monte_carlo_agrees():
    spec = _small_spec(trials=3, draws=20_000, crosscheck=True, sweep_values=(20.0,),
                       methods=(MethodSpec("bs-sbf-fs", 2),))
    row = run_experiment(spec).rows[0]
    assert abs(row.extras["mc_sum_rate"] - row.sum_rate) < 3 * row.extras["mc_stderr"]


def test_failed_cell_recorded_and_others_continue():
    spec = _small_spec(trials=2, budget=10, sweep_values=(20.0,),
                       methods=(MethodSpec("bs-sbf-exhaustive"), MethodSpec("bs-sbf-fs")))
    rows = run_experiment(spec).rows
    bad = [r for r in rows if r.method == "bs-sbf-exhaustive-G1"][0]
    good = [r for r in rows if r.method == "bs-sbf-fs-G1"][0]
    assert "InstanceTooLargeError" in bad.extras["error"] and math.isnan(bad.sum_rate)
    assert math.isfinite(good.sum_rate)


def test_ber_column_filled_when_requested():
    spec = _small_spec(trials=2, ber_symbols=2000, sweep_values=(20.0,))
    for r in run_experiment(spec).rows:
        assert 0 <= r.ber <= 0.5 and math.isfinite(r.ber_stderr)


@pytest.mark.parametrize("doc,field", [
    ({"trials": 0}, "trials"),
    ({"trials": "many"}, "trials"),
    ({"scenario": {"kind": "ring"}}, "scenario.kind"),
    ({"scenario": {"colour": 1}}, "scenario.colour"),
    ({"sweep": {"variable": "Q", "values": [1]}}, "sweep.variable"),
    ({"methods": [{"name": "magic"}]}, "methods[0].name"),
    ({"methods": [{"name": "bs-sbf-fs", "beams_per_user": 9}]}, "methods[0].beams_per_user"),
    ({"sweep": {"variable": "K", "values": [4, 80]}, "methods": [{"name": "bs-sbf-fs"}]},
     "methods[0].beams_per_user"),
    ({"sweep": {"variable": "tau0", "values": [0.5, 2.0]}}, "sweep.values"),
    ({"version": 2}, "version"),
])
def test_spec_errors_name_the_field(doc, field):
    with pytest.raises(SpecError) as info:
        spec_from_dict(doc)
    assert info.value.field == field


def test_spec_defaults_parse():
    spec = spec_from_dict({"name": "x", "sweep": {"variable": "delta0", "values": [0, 0.5]}})
    assert spec.sweep_values == (0.0, 0.5) and spec.num_users == 8
