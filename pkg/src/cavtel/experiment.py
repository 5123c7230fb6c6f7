"""Ensembles of protocol runs and density-matrix cross checks.

Trajectories are independently seeded by spawning one child seed per index
from a master seed, and all statistics reduce over summaries sorted by
index, so results are bit-identical however the work is ordered.

Success probability is reported as a function of the repetition budget:
``P[k]`` is the fraction of all trajectories that succeeded using at most
``k`` repetitions. ``F[k]`` is the mean teleportation fidelity over those
successes, so the two arrays trace the insurance trade-off curve.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import Segment, evolve_with_jumps, make_propagator
from .params import TWO_PI, PROFILES, PhysicalParams
from .protocol import SUCCESS_OUTCOMES, ProtocolRecord, make_backend, run_protocol
from .pulses import solve_pulse_times
from .spaces import Register, SparseOp, normalized


def haar_input(rng) -> tuple[complex, complex]:
    """Amplitude pair drawn uniformly from the qubit state space."""
    cos_polar = rng.uniform(-1.0, 1.0)
    half = 0.5 * math.acos(cos_polar)
    phase = rng.uniform(0.0, TWO_PI)
    return complex(math.cos(half)), complex(math.sin(half) * np.exp(1j * phase))


def receiver_fidelity(space: Register, psi, a, b) -> float:
    """Overlap of the receiver's reduced state with the intended qubit."""
    rho = space.reduced_density(psi, 1)
    target = a * space.site_ket(1, "100") + b * space.site_ket(1, "010")
    return float(np.real(np.conj(target) @ rho @ target))


@dataclass
class TrajectorySummary:
    index: int
    outcome: str
    repetitions: int
    silent_resets: int
    double_resets: int
    fidelity: float
    branch: str
    leakage: float
    elapsed: float

    @property
    def succeeded(self) -> bool:
        return self.outcome in SUCCESS_OUTCOMES


@dataclass
class EnsembleConfig:
    backend: str = "ideal"
    profile: str = "reference"
    trajectories: int = 100
    max_repetitions: int = 6
    seed: int = 20240816
    detect_lifetimes: float = 10.0
    amp_in: tuple[complex, complex] | None = None
    params: PhysicalParams | None = None

    def resolve_params(self) -> PhysicalParams:
        if self.params is not None:
            return self.params
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile: {self.profile!r}")
        return PROFILES[self.profile]()


@dataclass
class EnsembleResult:
    config: EnsembleConfig
    params: PhysicalParams
    summaries: list[TrajectorySummary]
    stats: dict
    records: list[ProtocolRecord] = field(default_factory=list)


def run_ensemble(config: EnsembleConfig, trace=None, keep_records=False) -> EnsembleResult:
    params = config.resolve_params()
    times = solve_pulse_times(params, detect_lifetimes=config.detect_lifetimes)
    backend = make_backend(config.backend, params, times)
    children = np.random.SeedSequence(config.seed).spawn(config.trajectories)
    summaries = []
    records = []
    for index in range(config.trajectories):
        rng = np.random.default_rng(children[index])
        a, b = config.amp_in if config.amp_in is not None else haar_input(rng)
        tracer = None
        if trace is not None:
            tracer = lambda event, _i=index: trace({"trajectory": _i, **event})
        record = run_protocol(backend, a, b, rng, max_repetitions=config.max_repetitions, trace=tracer)
        fidelity = math.nan
        if record.outcome in SUCCESS_OUTCOMES:
            fidelity = receiver_fidelity(backend.space, record.final_state, *record.amp_in)
        summaries.append(
            TrajectorySummary(
                index=index,
                outcome=record.outcome,
                repetitions=record.silent_resets + record.double_resets,
                silent_resets=record.silent_resets,
                double_resets=record.double_resets,
                fidelity=fidelity,
                branch=record.branch,
                leakage=record.leakage,
                elapsed=record.elapsed,
            )
        )
        if keep_records:
            records.append(record)
    stats = compute_stats(summaries, config.max_repetitions)
    return EnsembleResult(config, params, summaries, stats, records)


def compute_stats(summaries, max_repetitions) -> dict:
    ordered = sorted(summaries, key=lambda s: s.index)
    n = len(ordered)
    outcomes = {}
    for s in ordered:
        outcomes[s.outcome] = outcomes.get(s.outcome, 0) + 1
    budgets = list(range(max_repetitions + 1))
    p_curve, p_err, f_curve, f_err, counts = [], [], [], [], []
    for k in budgets:
        fids = [s.fidelity for s in ordered if s.succeeded and s.repetitions <= k]
        m = len(fids)
        p = m / n if n else 0.0
        p_curve.append(p)
        p_err.append(math.sqrt(p * (1.0 - p) / n) if n else 0.0)
        counts.append(m)
        if m:
            mean = sum(fids) / m
            var = sum((f - mean) ** 2 for f in fids) / m
            f_curve.append(mean)
            f_err.append(math.sqrt(var / m))
        else:
            f_curve.append(math.nan)
            f_err.append(math.nan)
    all_fids = [s.fidelity for s in ordered if s.succeeded]
    return {
        "trajectories": n,
        "outcomes": outcomes,
        "budgets": budgets,
        "success_probability": p_curve,
        "success_probability_err": p_err,
        "success_counts": counts,
        "mean_fidelity": f_curve,
        "mean_fidelity_err": f_err,
        "overall_success_fidelity": (sum(all_fids) / len(all_fids)) if all_fids else math.nan,
        "mean_repetitions": (
            sum(s.repetitions for s in ordered if s.succeeded) / len(all_fids) if all_fids else math.nan
        ),
    }


# -- density-matrix references ----------------------------------------------------


def master_equation_reference(h: SparseOp, channels, rho0, t_points, rtol=1e-8, atol=1e-8):
    """Integrate the unconditional evolution matching the jump unraveling.

    d(rho)/dt = -i (H rho - rho H^dag) + sum_c C rho C^dag, with H carrying
    the anti-Hermitian decay half. Returns one density matrix per requested
    time.
    """
    dim = h.dim
    hd = h.to_dense()
    hdc = hd.conj().T
    cs = [ch.op.to_dense() for ch in channels]
    csd = [c.conj().T for c in cs]

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        out = -1j * (hd @ rho - rho @ hdc)
        for c, cd in zip(cs, csd):
            out += c @ rho @ cd
        return out.ravel()

    t_end = float(t_points[-1])
    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        np.asarray(rho0, dtype=np.complex128).ravel(),
        t_eval=t_points,
        method="DOP853",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return sol.y.T.reshape(len(t_points), dim, dim)


def mcwf_density_average(h: SparseOp, channels, psi0, t_points, n_traj, seed):
    """Trajectory-averaged density matrices at the requested checkpoints."""
    prop = make_propagator(h)
    dim = h.dim
    rhos = np.zeros((len(t_points), dim, dim), dtype=np.complex128)
    children = np.random.SeedSequence(seed).spawn(n_traj)
    for child in children:
        rng = np.random.default_rng(child)
        psi = np.asarray(psi0, dtype=np.complex128)
        t_prev = 0.0
        for j, t in enumerate(t_points):
            if t > t_prev:
                run = evolve_with_jumps(
                    psi, [Segment(t - t_prev, prop)], channels, rng, stop_on_emission=False
                )
                psi = normalized(run.psi)
                t_prev = t
            rhos[j] += np.outer(psi, np.conj(psi)) / n_traj
    return rhos


def trace_distance(rho_a, rho_b) -> float:
    eigs = np.linalg.eigvalsh(rho_a - rho_b)
    return 0.5 * float(np.sum(np.abs(eigs)))


# -- exports -----------------------------------------------------------------------


def write_summaries_csv(path, summaries):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["index", "outcome", "repetitions", "silent_resets", "double_resets",
             "fidelity", "branch", "leakage", "elapsed_us"]
        )
        for s in sorted(summaries, key=lambda s: s.index):
            writer.writerow(
                [s.index, s.outcome, s.repetitions, s.silent_resets, s.double_resets,
                 f"{s.fidelity:.12g}", s.branch, f"{s.leakage:.3g}", f"{s.elapsed:.6g}"]
            )


def result_summary_dict(result: EnsembleResult) -> dict:
    p = result.params
    return {
        "config": {
            "backend": result.config.backend,
            "profile": result.config.profile,
            "trajectories": result.config.trajectories,
            "max_repetitions": result.config.max_repetitions,
            "seed": result.config.seed,
            "detect_lifetimes": result.config.detect_lifetimes,
        },
        "params_rad_per_us": {
            "laser_detuning": p.laser_detuning,
            "rabi_strong": p.rabi_strong,
            "rabi_weak": p.rabi_weak,
            "cavity_coupling": p.cavity_coupling,
            "atom_decay": p.atom_decay,
            "cavity_decay": p.cavity_decay,
        },
        "stats": result.stats,
    }


def write_summary_json(path, result: EnsembleResult):
    with open(path, "w") as fh:
        json.dump(result_summary_dict(result), fh, indent=2)
        fh.write("\n")


def write_figure_csvs(outdir, stats):
    """Write the three trade-off curves as fig3/fig4/fig5 CSV files."""
    import os

    budgets = stats["budgets"]
    with open(os.path.join(outdir, "fig3.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["repetition_budget", "success_probability", "stderr"])
        for k in budgets:
            w.writerow([k, f"{stats['success_probability'][k]:.8g}", f"{stats['success_probability_err'][k]:.4g}"])
    with open(os.path.join(outdir, "fig4.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["repetition_budget", "mean_fidelity", "stderr", "successes"])
        for k in budgets:
            w.writerow(
                [k, f"{stats['mean_fidelity'][k]:.8g}", f"{stats['mean_fidelity_err'][k]:.4g}",
                 stats["success_counts"][k]]
            )
    with open(os.path.join(outdir, "fig5.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["success_probability", "mean_fidelity"])
        for k in budgets:
            w.writerow([f"{stats['success_probability'][k]:.8g}", f"{stats['mean_fidelity'][k]:.8g}"])
