"""Ensemble runner, statistics, density-matrix references, and exports."""

import csv
import json
import math

import numpy as np
import pytest

from cavtel.dynamics import detector_channels, effective_hamiltonian
from cavtel.experiment import (
    EnsembleConfig,
    TrajectorySummary,
    compute_stats,
    haar_input,
    master_equation_reference,
    mcwf_density_average,
    receiver_fidelity,
    result_summary_dict,
    run_ensemble,
    trace_distance,
    write_figure_csvs,
    write_summaries_csv,
    write_summary_json,
)
from cavtel.params import PhysicalParams, desk_params, reference_params
from cavtel.protocol import protocol_space
from cavtel.spaces import Register, SiteShape


def test_haar_input_statistics():
    rng = np.random.default_rng(0)
    pairs = [haar_input(rng) for _ in range(4000)]
    for a, b in pairs[:50]:
        assert abs(a) ** 2 + abs(b) ** 2 == pytest.approx(1.0, abs=1e-12)
    # |a|^2 is uniform on [0, 1] for Haar draws.
    weights = np.array([abs(a) ** 2 for a, _ in pairs])
    assert weights.mean() == pytest.approx(0.5, abs=0.02)
    assert np.quantile(weights, 0.25) == pytest.approx(0.25, abs=0.03)


def test_haar_input_is_seed_deterministic():
    assert haar_input(np.random.default_rng(5)) == haar_input(np.random.default_rng(5))


def test_receiver_fidelity_crafted_states():
    space = protocol_space()
    pure = space.ket("0000;100")
    assert receiver_fidelity(space, pure, 1.0, 0.0) == pytest.approx(1.0)
    assert receiver_fidelity(space, pure, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    entangled = (space.ket("0000;100") + space.ket("1000;010")) / np.sqrt(2)
    s = 1 / np.sqrt(2)
    assert receiver_fidelity(space, entangled, s, s) == pytest.approx(0.5)


def test_resolve_params_profiles_and_override():
    assert EnsembleConfig(profile="reference").resolve_params() == reference_params()
    assert EnsembleConfig(profile="desk").resolve_params() == desk_params()
    custom = desk_params()
    assert EnsembleConfig(profile="reference", params=custom).resolve_params() is custom
    with pytest.raises(ValueError):
        EnsembleConfig(profile="bench").resolve_params()


@pytest.fixture(scope="module")
def small_ideal_result():
    cfg = EnsembleConfig(backend="ideal", trajectories=40, seed=99)
    return run_ensemble(cfg)


def test_run_ensemble_shapes_and_determinism(small_ideal_result):
    res = small_ideal_result
    assert len(res.summaries) == 40
    assert res.records == []
    again = run_ensemble(EnsembleConfig(backend="ideal", trajectories=40, seed=99))
    for s0, s1 in zip(res.summaries, again.summaries):
        assert (s0.outcome, s0.repetitions, s0.branch) == (s1.outcome, s1.repetitions, s1.branch)
        assert s0.fidelity == s1.fidelity or (math.isnan(s0.fidelity) and math.isnan(s1.fidelity))


def test_run_ensemble_prefix_stability(small_ideal_result):
    # Trajectory i only depends on (seed, i), not on the ensemble size.
    shorter = run_ensemble(EnsembleConfig(backend="ideal", trajectories=10, seed=99))
    for s0, s1 in zip(shorter.summaries, small_ideal_result.summaries):
        assert s0.outcome == s1.outcome
        assert s0.elapsed == s1.elapsed


def test_run_ensemble_fidelity_nan_only_on_failure(small_ideal_result):
    for s in small_ideal_result.summaries:
        if s.succeeded:
            assert s.fidelity == pytest.approx(1.0, abs=1e-9)
            assert s.repetitions == s.silent_resets + s.double_resets
        else:
            assert math.isnan(s.fidelity)


def test_run_ensemble_keep_records_and_fixed_input():
    cfg = EnsembleConfig(backend="ideal", trajectories=5, seed=7, amp_in=(0.6, 0.8))
    res = run_ensemble(cfg, keep_records=True)
    assert len(res.records) == 5
    for rec in res.records:
        assert rec.amp_in == (pytest.approx(0.6), pytest.approx(0.8))


def test_run_ensemble_trace_tags_trajectories():
    events = []
    run_ensemble(EnsembleConfig(backend="ideal", trajectories=3, seed=1), trace=events.append)
    assert {e["trajectory"] for e in events} == {0, 1, 2}
    assert all("event" in e for e in events)


def _summary(index, outcome, reps, fid):
    return TrajectorySummary(
        index=index,
        outcome=outcome,
        repetitions=reps,
        silent_resets=reps,
        double_resets=0,
        fidelity=fid,
        branch="click" if outcome.startswith("success") else "",
        leakage=0.0,
        elapsed=1.0,
    )


def test_compute_stats_hand_example():
    rows = [
        _summary(0, "success_final_click", 0, 1.0),
        _summary(1, "success_final_silent", 2, 0.9),
        _summary(2, "abort_stray_click", 1, math.nan),
        _summary(3, "success_final_click", 1, 0.8),
    ]
    stats = compute_stats(rows, max_repetitions=2)
    assert stats["trajectories"] == 4
    assert stats["budgets"] == [0, 1, 2]
    assert stats["success_probability"] == [0.25, 0.5, 0.75]
    assert stats["success_counts"] == [1, 2, 3]
    assert stats["mean_fidelity"][0] == pytest.approx(1.0)
    assert stats["mean_fidelity"][1] == pytest.approx(0.9)
    assert stats["mean_fidelity"][2] == pytest.approx(0.9)
    assert stats["overall_success_fidelity"] == pytest.approx(0.9)
    assert stats["mean_repetitions"] == pytest.approx(1.0)
    assert stats["outcomes"]["abort_stray_click"] == 1
    p = 0.5
    assert stats["success_probability_err"][1] == pytest.approx(math.sqrt(p * (1 - p) / 4))


def test_compute_stats_empty_budget_bins():
    rows = [_summary(0, "exhausted_repetitions", 3, math.nan)]
    stats = compute_stats(rows, max_repetitions=1)
    assert stats["success_probability"] == [0.0, 0.0]
    assert math.isnan(stats["mean_fidelity"][0])
    assert math.isnan(stats["overall_success_fidelity"])


@pytest.fixture(scope="module")
def decay_system():
    space = Register([SiteShape(1, 2, 1)])
    # Decay-dominated corner: dressing shifts well below the cavity rate, so
    # the reference integration resolves decay instead of fast phase winding.
    params = PhysicalParams.from_mhz(
        laser_detuning=2000.0,
        rabi_strong=1.0,
        rabi_weak=0.1,
        cavity_coupling=0.05,
        atom_decay=1e-4,
        cavity_decay=0.05,
    )
    h = effective_hamiltonian(space, params)
    channels = detector_channels(space, params)
    return space, params, h, channels


def test_master_equation_matches_exponential_decay(decay_system):
    space, params, h, channels = decay_system
    kappa = params.cavity_decay
    psi0 = space.ket("01")
    rho0 = np.outer(psi0, psi0.conj())
    t_points = np.array([0.5, 1.0, 2.0]) / kappa
    rhos = master_equation_reference(h, channels, rho0, t_points)
    i1 = space.index(space.parse("01"))
    i0 = space.index(space.parse("00"))
    for rho, t in zip(rhos, t_points):
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-7)
        assert rho[i1, i1].real == pytest.approx(np.exp(-2 * kappa * t), rel=1e-6)
        assert rho[i0, i0].real == pytest.approx(1 - np.exp(-2 * kappa * t), rel=1e-6)


def test_mcwf_average_approaches_master_equation(decay_system):
    space, params, h, channels = decay_system
    kappa = params.cavity_decay
    psi0 = (space.ket("01") + space.ket("10")) / np.sqrt(2)
    rho0 = np.outer(psi0, psi0.conj())
    t_points = np.array([0.3, 0.9, 1.8]) / kappa
    exact = master_equation_reference(h, channels, rho0, t_points)
    sampled = mcwf_density_average(h, channels, psi0, t_points, n_traj=400, seed=5)
    for rho_s, rho_e in zip(sampled, exact):
        assert np.trace(rho_s).real == pytest.approx(1.0, abs=1e-9)
        assert trace_distance(rho_s, rho_e) < 0.06


def test_trace_distance_reference_values():
    zero = np.diag([1.0, 0.0]).astype(complex)
    one = np.diag([0.0, 1.0]).astype(complex)
    mixed = np.diag([0.5, 0.5]).astype(complex)
    assert trace_distance(zero, one) == pytest.approx(1.0)
    assert trace_distance(zero, zero) == 0.0
    assert trace_distance(zero, mixed) == pytest.approx(0.5)


def test_csv_and_json_round_trip(tmp_path, small_ideal_result):
    res = small_ideal_result
    csv_path = tmp_path / "results.csv"
    write_summaries_csv(csv_path, res.summaries)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "index", "outcome", "repetitions", "silent_resets", "double_resets",
        "fidelity", "branch", "leakage", "elapsed_us",
    ]
    assert len(rows) == 1 + len(res.summaries)
    assert rows[1][0] == "0"

    json_path = tmp_path / "summary.json"
    write_summary_json(json_path, res)
    payload = json.loads(json_path.read_text())
    assert payload["config"]["trajectories"] == 40
    assert payload["stats"]["trajectories"] == 40
    assert payload["params_rad_per_us"]["rabi_strong"] == pytest.approx(
        reference_params().rabi_strong
    )
    assert payload == result_summary_dict(res)


def test_figure_csvs(tmp_path, small_ideal_result):
    write_figure_csvs(tmp_path, small_ideal_result.stats)
    with open(tmp_path / "fig3.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["repetition_budget", "success_probability", "stderr"]
    assert len(rows) == 2 + small_ideal_result.config.max_repetitions
    with open(tmp_path / "fig4.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["repetition_budget", "mean_fidelity", "stderr", "successes"]
    with open(tmp_path / "fig5.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["success_probability", "mean_fidelity"]
