"""Hamiltonians, decay channels, and Monte Carlo wave-function evolution.

Two model tiers share one interface. The full tier keeps the excited atomic
level and the laser couplings to it. The effective tier works in the ground
manifold after adiabatic elimination, with second-order shifts and exchange
rates from :mod:`cavtel.params`.

Evolution between quantum jumps uses the non-Hermitian Hamiltonian whose
anti-Hermitian part matches the decay channels: the squared norm of the
unnormalized state is the no-jump probability. A jump fires when that norm
falls to a uniform random threshold; the jump time is located by bisection,
the channel drawn by Born weights, and the state renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._kernels import eig_propagate, phase_decay_apply, survival_solve
from .params import PhysicalParams
from .spaces import Register, SparseOp, norm2

JUMP_TIME_RTOL = 1e-9
EIG_CHECK_RTOL = 1e-8


def normalize_lasers(lasers) -> tuple:
    """Canonical laser configuration: sorted (site, atom, strong, weak) rows.

    At most one atom per site may be illuminated; rows with both flags off
    are dropped.
    """
    rows = []
    seen_sites = set()
    for row in lasers or ():
        site, atom, strong, weak = row
        if not (strong or weak):
            continue
        if site in seen_sites:
            raise ValueError("one illuminated atom per site")
        seen_sites.add(site)
        rows.append((int(site), int(atom), bool(strong), bool(weak)))
    return tuple(sorted(rows))


def _diag_op(space, values) -> SparseOp:
    idx = np.flatnonzero(values)
    return SparseOp(space.dim, idx, idx, values[idx])


def effective_hamiltonian(space: Register, params: PhysicalParams, lasers=()) -> SparseOp:
    """Ground-manifold Hamiltonian, non-Hermitian through cavity decay."""
    p = params
    diag = np.zeros(space.dim, dtype=np.complex128)
    for s in range(len(space.sites)):
        y = space.photon_numbers(s)
        zeros = space.zero_level_count(s)
        diag += -1j * p.cavity_decay * y
        diag += -(p.detuning_offset + p.shift_photon * y) * zeros
    h = _diag_op(space, diag)
    for site, atom, strong, weak in normalize_lasers(lasers):
        a = space.annihilate(site)
        raise_10 = space.transition(site, atom, 1, 0)
        if strong:
            proj1 = space.transition(site, atom, 1, 1)
            h = h + proj1.scaled(-p.shift_strong)
            exch = a @ raise_10
            h = h + exch.scaled(-p.rabi_exchange) + exch.dagger().scaled(-p.rabi_exchange)
        if weak:
            proj0 = space.transition(site, atom, 0, 0)
            h = h + proj0.scaled(-p.shift_weak)
            cross = a @ proj0
            h = h + cross.scaled(-p.cross_weak_cavity) + cross.dagger().scaled(-p.cross_weak_cavity)
        if strong and weak:
            h = h + raise_10.scaled(-p.rabi_raman) + raise_10.dagger().scaled(-p.rabi_raman)
    return h


def full_hamiltonian(space: Register, params: PhysicalParams, lasers=()) -> SparseOp:
    """Three-level Hamiltonian with the excited state kept explicitly."""
    for shape in space.sites:
        if shape.levels != 3:
            raise ValueError("full model needs three-level atoms")
    p = params
    diag = np.zeros(space.dim, dtype=np.complex128)
    for s in range(len(space.sites)):
        diag += -1j * p.cavity_decay * space.photon_numbers(s)
        diag += -p.detuning_offset * space.zero_level_count(s)
        for atom in range(space.sites[s].atoms):
            diag += (p.laser_detuning - 1j * p.atom_decay) * (space.atom_levels(s, atom) == 2)
    h = _diag_op(space, diag)
    for s in range(len(space.sites)):
        a = space.annihilate(s)
        for atom in range(space.sites[s].atoms):
            absorb = a @ space.transition(s, atom, 2, 0)
            h = h + absorb.scaled(p.cavity_coupling) + absorb.dagger().scaled(p.cavity_coupling)
    for site, atom, strong, weak in normalize_lasers(lasers):
        if strong:
            up = space.transition(site, atom, 2, 1)
            h = h + up.scaled(p.rabi_strong) + up.dagger().scaled(p.rabi_strong)
        if weak:
            up = space.transition(site, atom, 2, 0)
            h = h + up.scaled(p.rabi_weak) + up.dagger().scaled(p.rabi_weak)
    return h


@dataclass(frozen=True)
class Channel:
    """One decay channel: a collapse operator with bookkeeping labels."""

    name: str
    kind: str  # "detector" or "emission"
    sign: int  # +1/-1 for the two detector ports, 0 otherwise
    op: SparseOp


def detector_channels(space: Register, params: PhysicalParams) -> list[Channel]:
    """Beam-splitter mixed cavity outputs: sum and difference ports.

    With a single site both ports see the same field, which keeps the total
    decay rate per photon identical to the two-site case.
    """
    scale = math.sqrt(params.cavity_decay)
    a0 = space.annihilate(0)
    a1 = space.annihilate(1) if len(space.sites) > 1 else a0.scaled(0.0)
    return [
        Channel("detector_plus", "detector", +1, (a0 + a1).scaled(scale)),
        Channel("detector_minus", "detector", -1, (a0 + a1.scaled(-1.0)).scaled(scale)),
    ]


def emission_channels(space: Register, params: PhysicalParams) -> list[Channel]:
    """Spontaneous decay from the excited level into both ground levels."""
    scale = math.sqrt(params.atom_decay)
    out = []
    for s in range(len(space.sites)):
        for atom in range(space.sites[s].atoms):
            for ground in (0, 1):
                op = space.transition(s, atom, ground, 2).scaled(scale)
                out.append(Channel(f"emission_s{s}a{atom}_to{ground}", "emission", 0, op))
    return out


def decay_balance_defect(h: SparseOp, channels) -> float:
    """Max deviation of i(H - H^dag) from sum(C^dag C); zero for a valid pair."""
    anti = 1j * (h.to_dense() - h.to_dense().conj().T)
    total = np.zeros_like(anti)
    for ch in channels:
        dense = ch.op.to_dense()
        total += dense.conj().T @ dense
    return float(np.max(np.abs(anti - total)))


# -- propagators ------------------------------------------------------------------


class DiagonalPropagator:
    """exp(-iHt) for diagonal H, with analytic no-jump survival times."""

    def __init__(self, diag):
        self.diag = np.asarray(diag, dtype=np.complex128)
        self.phase_rate = -np.real(self.diag)
        self.decay_rate = -np.imag(self.diag)
        if np.any(self.decay_rate < -1e-12):
            raise ValueError("diagonal growth would break norm monotonicity")

    def evolve(self, psi, t):
        return phase_decay_apply(psi, self.phase_rate, self.decay_rate, t)

    def survival_time(self, psi, threshold, t_max):
        """First time the squared norm reaches threshold, or -1 if it never does."""
        return survival_solve(np.abs(psi) ** 2, 2.0 * self.decay_rate, threshold, t_max)


class EigPropagator:
    """exp(-iHt) through a cached eigendecomposition H = V diag(lam) W."""

    def __init__(self, lam, vmat, wmat):
        self.lam = lam
        self.vmat = np.ascontiguousarray(vmat)
        self.wmat = np.ascontiguousarray(wmat)

    def evolve(self, psi, t):
        return eig_propagate(self.vmat, self.wmat, self.lam, psi, t)


class ExpmPropagator:
    """Fallback exp(-iHt) by direct matrix exponential, memoized per duration."""

    def __init__(self, h_dense):
        self.h = h_dense
        self._cache = {}

    def evolve(self, psi, t):
        key = float(t)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = scipy.linalg.expm(-1j * self.h * key)
        return self._cache[key] @ psi


def make_propagator(h: SparseOp):
    dense = h.to_dense()
    off = dense - np.diag(np.diag(dense))
    if not np.any(off):
        return DiagonalPropagator(np.diag(dense))
    lam, vmat = scipy.linalg.eig(dense)
    try:
        wmat = scipy.linalg.inv(vmat)
    except scipy.linalg.LinAlgError:
        return ExpmPropagator(dense)
    scale = float(np.max(np.abs(dense)))
    residual = float(np.max(np.abs((vmat * lam) @ wmat - dense)))
    if residual > EIG_CHECK_RTOL * max(scale, 1e-300):
        return ExpmPropagator(dense)
    return EigPropagator(lam, vmat, wmat)


class PropagatorCache:
    """Propagators per laser configuration for one space and model tier."""

    def __init__(self, space: Register, params: PhysicalParams, tier="effective"):
        if tier not in ("effective", "full"):
            raise ValueError("tier must be 'effective' or 'full'")
        self.space = space
        self.params = params
        self.tier = tier
        self._cache = {}

    def hamiltonian(self, lasers=()) -> SparseOp:
        build = effective_hamiltonian if self.tier == "effective" else full_hamiltonian
        return build(self.space, self.params, lasers)

    def get(self, lasers=()):
        key = normalize_lasers(lasers)
        if key not in self._cache:
            self._cache[key] = make_propagator(self.hamiltonian(key))
        return self._cache[key]


# -- trajectory stepping ----------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """One interval of constant Hamiltonian."""

    duration: float
    propagator: object
    label: str = ""


@dataclass
class Click:
    time: float
    channel: str
    kind: str
    sign: int
    label: str = ""


@dataclass
class JumpRun:
    """Outcome of one no-jump/jump walk: state is left unnormalized."""

    psi: np.ndarray
    clicks: list[Click] = field(default_factory=list)
    elapsed: float = 0.0
    stopped_early: bool = False


def _bisect_jump_time(propagator, psi, threshold, t_hi):
    lo, hi = 0.0, t_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if norm2(propagator.evolve(psi, mid)) > threshold:
            lo = mid
        else:
            hi = mid
        if hi - lo <= JUMP_TIME_RTOL * t_hi:
            break
    return 0.5 * (lo + hi)


def evolve_with_jumps(
    psi,
    segments,
    channels,
    rng,
    t0=0.0,
    stop_after_first_detector=False,
    stop_on_emission=True,
) -> JumpRun:
    """Walk constant-Hamiltonian segments, sampling quantum jumps.

    ``psi`` must enter normalized. The returned state is unnormalized; its
    squared norm is the no-jump probability since the last jump. Click times
    are absolute (offset by ``t0``). With ``stop_after_first_detector`` the
    walk returns right after the first detector click; emission clicks stop
    the walk by default so callers can abort.
    """
    run = JumpRun(psi=np.array(psi, dtype=np.complex128))
    threshold = rng.random()
    for seg in segments:
        remaining = seg.duration
        while remaining > 0.0:
            evolved = seg.propagator.evolve(run.psi, remaining)
            if norm2(evolved) > threshold:
                run.psi = evolved
                run.elapsed += remaining
                break
            if isinstance(seg.propagator, DiagonalPropagator):
                t_jump = seg.propagator.survival_time(run.psi, threshold, remaining)
                if t_jump < 0.0:
                    t_jump = remaining
            else:
                t_jump = _bisect_jump_time(seg.propagator, run.psi, threshold, remaining)
            at_jump = seg.propagator.evolve(run.psi, t_jump)
            branches = [ch.op.apply(at_jump) for ch in channels]
            weights = np.array([norm2(b) for b in branches])
            total = float(weights.sum())
            if total <= 0.0:
                # Numerically normless corner: no channel carries amplitude.
                run.psi = at_jump
                run.elapsed += t_jump
                remaining -= t_jump
                threshold = rng.random() * norm2(at_jump)
                continue
            edges = np.cumsum(weights)
            pick = min(int(np.searchsorted(edges, rng.random() * total, side="right")), len(channels) - 1)
            chan = channels[pick]
            run.psi = branches[pick] / math.sqrt(weights[pick])
            run.elapsed += t_jump
            remaining -= t_jump
            run.clicks.append(
                Click(t0 + run.elapsed, chan.name, chan.kind, chan.sign, seg.label)
            )
            threshold = rng.random()
            if (stop_after_first_detector and chan.kind == "detector") or (
                stop_on_emission and chan.kind == "emission"
            ):
                run.stopped_early = True
                return run
    return run
