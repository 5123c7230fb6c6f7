"""State-machine driver for the teleportation protocol with retry insurance.

One register holds the sender site (three atoms: two data carriers and one
ancilla) and the receiver site (two atoms). A protocol round runs five
phases:

1. entangle: swap pulses push the sender ancilla and receiver atom 1 into
   their cavities; the first detector click heralds a shared single photon,
   and repeating the swaps maps it back onto the atoms.
2. encode: four pulses spread the data qubit over photon-number sectors so
   that the upcoming detection splits it into recoverable pieces.
3. main detection: exactly one click teleports; zero or two clicks leave a
   protected copy, and flip pulses rebuild the start state with the atom
   roles rotated, spending one repetition.
4. confirming detection: a swap on the ancilla and a second window fold the
   two remaining encodings together; one click and silence are both wins.
5. recovery: swap pulses and a timed phase wait on the receiver undo the
   heralded phase, leaving the input qubit on the receiver atoms.

Every backend exposes the same four primitives (initial state, pulse
block, detection window, phase wait), so the driver is identical for the
closed-form engine and the Monte Carlo tiers.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    Channel,
    Click,
    PropagatorCache,
    Segment,
    detector_channels,
    emission_channels,
    evolve_with_jumps,
)
from .params import PhysicalParams
from .pulses import FLIP_INTENT_ANGLE, PULSE_INTENT, AnalyticEngine, PulseTimes, solve_pulse_times
from .spaces import Register, SiteShape, norm2, normalized

# Outcome labels.
SUCCESS_FINAL_CLICK = "success_final_click"
SUCCESS_FINAL_SILENT = "success_final_silent"
ABORT_SPONTANEOUS = "abort_spontaneous_emission"
ABORT_STRAY_CLICK = "abort_stray_click"
INVALID = "invalid"
EXHAUSTED = "exhausted_repetitions"

SUCCESS_OUTCOMES = (SUCCESS_FINAL_CLICK, SUCCESS_FINAL_SILENT)

# Stage labels used in records and traces.
STAGE_PREP = "entangle"
STAGE_ENCODE = "encode"
STAGE_DETECT_MAIN = "detect_main"
STAGE_RESET = "reset"
STAGE_DETECT_CONFIRM = "detect_confirm"
STAGE_RECOVERY = "recovery"

LEAKAGE_LIMIT = 1e-6
PREP_RETRY_LIMIT = 5


class _Abort(Exception):
    def __init__(self, outcome, reason):
        super().__init__(reason)
        self.outcome = outcome
        self.reason = reason


@dataclass
class ProtocolRecord:
    """Everything one run produced, including the classical control data."""

    amp_in: tuple[complex, complex]
    outcome: str | None = None
    reason: str = ""
    repetitions: int = 0
    silent_resets: int = 0
    double_resets: int = 0
    prep_sign: int = 0
    main_sign: int = 0
    main_click_offset: float = 0.0
    branch: str = ""
    branch_phase: complex = 0.0
    recovery_wait: float = 0.0
    clicks: list[Click] = field(default_factory=list)
    final_state: np.ndarray | None = None
    pre_recovery_state: np.ndarray | None = None
    post_reset_state: np.ndarray | None = None
    post_reset_kind: str = ""
    post_reset_roles: tuple[int, int, int] = (0, 1, 2)
    roles: tuple[int, int, int] = (0, 1, 2)
    leakage: float = 0.0
    elapsed: float = 0.0


@dataclass(frozen=True)
class PhaseRules:
    """Classical control law: heralded phases and the waits that undo them.

    The branch phase multiplies the first input amplitude relative to the
    second in the pre-recovery receiver state. It collects the deterministic
    pulse phases of the successful round, one detection-time phase, and one
    reset factor per spent repetition.
    """

    params: PhysicalParams
    times: PulseTimes

    def _alpha(self, t: float) -> complex:
        return cmath.exp(1j * self.params.detuning_offset * t)

    def _chirp(self, t: float) -> complex:
        return cmath.exp(0.5j * self.params.shift_photon * t)

    @property
    def silent_reset_factor(self) -> complex:
        t = self.times
        return -self._chirp(3.0 * (t.swap + t.swap_all))

    @property
    def double_reset_factor(self) -> complex:
        t = self.times
        return self._alpha(-t.swap_double) * self._chirp(2.0 * (t.swap + 3.0 * t.swap_all - 3.0 * t.swap_double))

    def _reset_product(self, record: ProtocolRecord) -> complex:
        return (
            self.silent_reset_factor**record.silent_resets
            * self.double_reset_factor**record.double_resets
        )

    def click_branch_phase(self, record: ProtocolRecord) -> complex:
        t = self.times
        reps = record.repetitions
        phase = (
            record.prep_sign
            * record.main_sign
            * self._alpha((reps + 1) * t.swap + reps * t.swap_all - 3.0 * t.swap_double)
            * self._chirp(1.5 * t.swap + t.swap_all - 13.0 * t.swap_double - 2.0 * record.main_click_offset)
        )
        return phase * self._reset_product(record)

    def silent_branch_phase(self, record: ProtocolRecord) -> complex:
        t = self.times
        reps = record.repetitions
        phase = (
            -record.prep_sign
            * record.main_sign
            * self._alpha((reps + 1) * t.swap + (reps + 2) * t.swap_all + 2.0 * t.swap_double)
            * self._chirp(3.5 * t.swap + 8.0 * t.swap_all + 7.0 * t.swap_double + 2.0 * record.main_click_offset)
        )
        return phase * self._reset_product(record)

    def _principal_wait(self, target: complex) -> float:
        period = 2.0 * math.pi / self.params.detuning_offset
        return (cmath.phase(target) / self.params.detuning_offset) % period

    def click_recovery_wait(self, branch_phase: complex) -> float:
        """Wait making exp(i*offset*t) cancel the click-branch phase."""
        t = self.times
        target = -1.0 / (branch_phase * self._alpha(2.0 * t.swap) * self._chirp(4.0 * t.swap))
        return self._principal_wait(target)

    def silent_recovery_wait(self, branch_phase: complex) -> float:
        return self._principal_wait(1.0 / branch_phase)

    def reset_state_factor(self, kind: str) -> complex:
        """Relative factor on the first amplitude right after one reset.

        Each repetition re-enters the same round structure, so the snapshot
        factor is the per-repetition branch-phase factor times the fresh
        round's own alpha share.
        """
        base = self._alpha(self.times.swap + self.times.swap_all)
        if kind == "silent":
            return base * self.silent_reset_factor
        if kind == "double":
            return base * self.double_reset_factor
        raise ValueError(f"unknown reset kind: {kind}")


def protocol_space(levels=2, cutoff=3) -> Register:
    return Register([SiteShape(3, levels, cutoff), SiteShape(2, levels, cutoff)])


def reset_target_state(space: Register, rules: PhaseRules, record: ProtocolRecord) -> np.ndarray:
    """State the classical tracker predicts right after the first reset."""
    if record.post_reset_state is None:
        raise ValueError("record holds no reset snapshot")
    a, b = record.amp_in
    d1, d2, anc = record.post_reset_roles

    def pattern(hot):
        return "".join("1" if k in (hot, anc) else "0" for k in range(3)) + "0;110"

    psi = a * rules.reset_state_factor(record.post_reset_kind) * space.ket(pattern(d1))
    psi += b * space.ket(pattern(d2))
    return normalized(psi)


class IdealBackend:
    """Closed-form engine: intended pulse angles, detection as an exact
    photon-number measurement with exponentially sampled click times."""

    name = "ideal"

    def __init__(self, params: PhysicalParams, times: PulseTimes | None = None):
        self.params = params
        self.times = times or solve_pulse_times(params)
        self.space = protocol_space()
        self.engine = AnalyticEngine(self.space, params)
        self._collapse = self.engine.collapse_ops()

    def initial_state(self, a, b) -> np.ndarray:
        psi = a * self.space.ket("1010;110") + b * self.space.ket("0110;110")
        return normalized(psi)

    def pulse_block(self, psi, drives, rng, t0=0.0, stage=""):
        span = max(self.times.duration(kind) for _, _, kind in drives)
        driven = {site for site, _, _ in drives}
        for site in range(len(self.space.sites)):
            if site not in driven:
                psi = self.engine.apply_wait(psi, span, sites=[site])
        for site, atom, kind in drives:
            dur = self.times.duration(kind)
            if dur < span:
                psi = self.engine.apply_wait(psi, span - dur, sites=[site])
            if kind == "flip":
                psi = self.engine.apply_flip_pulse(psi, site, atom, dur, intent_angle=FLIP_INTENT_ANGLE)
            else:
                psi = self.engine.apply_exchange_pulse(psi, site, atom, dur, intent=PULSE_INTENT[kind])
        return psi, [], span

    def _first_click_time(self, weights, rates, u):
        t_max = 1.0
        for _ in range(200):
            s = float(np.sum(weights * np.exp(-rates * t_max)))
            if s <= u:
                break
            t_max *= 4.0
        lo, hi = 0.0, t_max
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(np.sum(weights * np.exp(-rates * mid))) > u:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * t_max:
                break
        return 0.5 * (lo + hi)

    def detect_window(self, psi, rng, t0=0.0, stage="", stop_after_first=False):
        """Detection in the long-window limit: each photon is eventually
        seen, so click multiplicity measures the total photon number."""
        engine = self.engine
        clicks = []
        elapsed = 0.0
        rates = 2.0 * self.params.cavity_decay * engine.total_photons
        while True:
            weights = np.abs(psi) ** 2
            still = float(np.sum(weights[engine.total_photons == 0]))
            u = rng.random()
            if u < still:
                psi = normalized(engine.project_sector(psi, 0))
                break
            dt = self._first_click_time(weights, rates, u)
            tilde = engine.apply_wait(psi, dt)
            plus, minus = self._collapse[0].apply(tilde), self._collapse[1].apply(tilde)
            w_plus, w_minus = norm2(plus), norm2(minus)
            take_plus = rng.random() < w_plus / (w_plus + w_minus)
            psi = normalized(plus if take_plus else minus)
            elapsed += dt
            clicks.append(
                Click(t0 + elapsed, "detector_plus" if take_plus else "detector_minus",
                      "detector", +1 if take_plus else -1, stage)
            )
            if stop_after_first:
                return psi, clicks, elapsed
        return psi, clicks, self.times.detect

    def phase_wait(self, psi, duration, rng, t0=0.0, stage=""):
        return self.engine.apply_wait(psi, duration, photon_shift=False, decay=False), [], duration

    def truncation_exposure(self, psi, drives) -> float:
        # The closed-form maps raise on any real cutoff hit instead.
        return 0.0

    def top_population(self, psi) -> float:
        return 0.0


_KIND_LASERS = {
    "swap": (True, False),
    "half_swap": (True, False),
    "swap_all": (True, False),
    "swap_double": (True, False),
    "flip": (True, True),
}


class NumericBackend:
    """Monte Carlo wave functions under the reduced or three-level model."""

    def __init__(self, params: PhysicalParams, times: PulseTimes | None = None, tier="effective",
                 cutoff=None):
        self.params = params
        self.times = times or solve_pulse_times(params)
        self.tier = tier
        self.name = tier
        levels = 2 if tier == "effective" else 3
        if cutoff is None:
            # Pulse residue parks ~1e-5 population three rungs up after a failed
            # round; one rung beyond that keeps the guard level quiet.
            cutoff = 4 if tier == "effective" else 3
        self.space = protocol_space(levels=levels, cutoff=cutoff)
        self.cache = PropagatorCache(self.space, params, tier)
        self.channels = detector_channels(self.space, params)
        if tier == "full":
            self.channels = self.channels + emission_channels(self.space, params)

    def initial_state(self, a, b) -> np.ndarray:
        psi = a * self.space.ket("1010;110") + b * self.space.ket("0110;110")
        return normalized(psi)

    def _segments(self, drives, stage):
        """Split a block of end-aligned drives at each drive's start time."""
        span = max(self.times.duration(kind) for _, _, kind in drives)
        tol = 1e-9 * span
        starts = {0.0, span}
        for _, _, kind in drives:
            starts.add(span - self.times.duration(kind))
        edges = sorted(starts)
        segments = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi - lo <= tol:
                continue
            rows = []
            for site, atom, kind in drives:
                if span - self.times.duration(kind) <= lo + tol:
                    strong, weak = _KIND_LASERS[kind]
                    rows.append((site, atom, strong, weak))
            segments.append(Segment(hi - lo, self.cache.get(rows), stage))
        return segments, span

    def pulse_block(self, psi, drives, rng, t0=0.0, stage=""):
        segments, span = self._segments(drives, stage)
        run = evolve_with_jumps(psi, segments, self.channels, rng, t0=t0)
        return normalized(run.psi), run.clicks, span

    def detect_window(self, psi, rng, t0=0.0, stage="", stop_after_first=False):
        seg = Segment(self.times.detect, self.cache.get(()), stage)
        run = evolve_with_jumps(
            psi, [seg], self.channels, rng, t0=t0, stop_after_first_detector=stop_after_first
        )
        return normalized(run.psi), run.clicks, run.elapsed

    def phase_wait(self, psi, duration, rng, t0=0.0, stage=""):
        seg = Segment(duration, self.cache.get(()), stage)
        run = evolve_with_jumps(psi, [seg], self.channels, rng, t0=t0)
        return normalized(run.psi), run.clicks, run.elapsed

    def truncation_exposure(self, psi, drives) -> float:
        """Population sitting in blocks whose upward coupling was cut off.

        Amplitude parked at the top photon level is still propagated exactly
        unless the active drive would have pushed it one rung higher.  Only
        that stranded share measures real cutoff error; the rest of the top
        level is benign and stays out of the tally.
        """
        space = self.space
        mask = np.zeros(space.dim, dtype=bool)
        if self.tier == "full":
            for site, shape in enumerate(space.sites):
                at_top = space.photon_numbers(site) == shape.cutoff
                for atom in range(shape.atoms):
                    mask |= at_top & (space.atom_levels(site, atom) == 2)
        else:
            for site, atom, _kind in drives:
                cutoff = space.sites[site].cutoff
                mask |= (space.photon_numbers(site) == cutoff) & (
                    space.atom_levels(site, atom) == 1
                )
        return float(np.sum(np.abs(psi[mask]) ** 2))

    def top_population(self, psi) -> float:
        return self.space.top_level_population(psi)


def make_backend(kind, params, times=None):
    if kind == "ideal":
        return IdealBackend(params, times)
    if kind in ("effective", "full"):
        return NumericBackend(params, times, tier=kind)
    raise ValueError(f"unknown backend kind: {kind}")


# -- driver ------------------------------------------------------------------------


def _split_clicks(clicks):
    detector = [c for c in clicks if c.kind == "detector"]
    emission = [c for c in clicks if c.kind == "emission"]
    return detector, emission


def _require_quiet(clicks, where):
    detector, emission = _split_clicks(clicks)
    if emission:
        raise _Abort(ABORT_SPONTANEOUS, f"spontaneous emission during {where}")
    if detector:
        raise _Abort(ABORT_STRAY_CLICK, f"stray detector click during {where}")


class _Run:
    """Mutable state shared by the stage helpers of one protocol run."""

    def __init__(self, backend, rng, record, trace):
        self.backend = backend
        self.rng = rng
        self.rec = record
        self.trace = trace
        self.clock = 0.0
        self.roles = (0, 1, 2)

    def emit(self, event, **fields):
        if self.trace is not None:
            self.trace({"event": event, "t": self.clock, **fields})

    def pulses(self, psi, drives, stage, quiet=True):
        psi, clicks, span = self.backend.pulse_block(psi, drives, self.rng, t0=self.clock, stage=stage)
        self.clock += span
        self.rec.clicks.extend(clicks)
        self.emit("pulses", stage=stage, drives=[list(d) for d in drives])
        leak = self.backend.truncation_exposure(psi, drives)
        self.rec.leakage = max(self.rec.leakage, leak)
        if leak > LEAKAGE_LIMIT:
            raise _Abort(INVALID, "population stranded at the photon cutoff")
        if quiet:
            _require_quiet(clicks, stage)
        return psi

    def window(self, psi, stage, stop_after_first=False):
        psi, clicks, elapsed = self.backend.detect_window(
            psi, self.rng, t0=self.clock, stage=stage, stop_after_first=stop_after_first
        )
        self.clock += elapsed
        self.rec.clicks.extend(clicks)
        detector, emission = _split_clicks(clicks)
        if emission:
            raise _Abort(ABORT_SPONTANEOUS, f"spontaneous emission during {stage}")
        self.emit("window", stage=stage, clicks=[[c.time, c.sign] for c in detector])
        return psi, detector, elapsed

    def wait(self, psi, duration, stage):
        psi, clicks, elapsed = self.backend.phase_wait(psi, duration, self.rng, t0=self.clock, stage=stage)
        self.clock += elapsed
        self.rec.clicks.extend(clicks)
        _require_quiet(clicks, stage)
        self.emit("wait", stage=stage, duration=duration)
        return psi


def run_protocol(backend, a, b, rng, max_repetitions=6, trace=None) -> ProtocolRecord:
    """Run one trajectory; returns the record with outcome and final state."""
    scale = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    a, b = complex(a) / scale, complex(b) / scale
    rec = ProtocolRecord(amp_in=(a, b))
    run = _Run(backend, rng, rec, trace)
    rules = PhaseRules(backend.params, backend.times)
    psi = backend.initial_state(a, b)
    try:
        psi = _main_rounds(run, psi, rules, max_repetitions)
        if rec.outcome is None:
            psi = _confirm_and_recover(run, psi, rules)
    except _Abort as sig:
        rec.outcome = sig.outcome
        rec.reason = sig.reason
    rec.roles = run.roles
    rec.elapsed = run.clock
    return rec


def _main_rounds(run: _Run, psi, rules: PhaseRules, max_repetitions):
    rec, backend = run.rec, run.backend
    for attempt in range(max_repetitions + 1):
        psi = _entangle(run, psi)
        psi = _encode(run, psi)
        psi, detector, _ = run.window(psi, STAGE_DETECT_MAIN)
        if len(detector) == 1:
            rec.repetitions = attempt
            rec.main_sign = detector[0].sign
            rec.main_click_offset = detector[0].time - (run.clock - backend.times.detect)
            return psi
        if len(detector) == 0:
            run.emit("reset", kind="silent")
            rec.silent_resets += 1
            psi = run.pulses(psi, [(0, run.roles[0], "flip")], STAGE_RESET)
            run.roles = (run.roles[2], run.roles[1], run.roles[0])
            _snapshot_reset(rec, psi, "silent", run.roles)
        elif len(detector) == 2:
            run.emit("reset", kind="double")
            rec.double_resets += 1
            psi = run.pulses(
                psi, [(0, run.roles[0], "flip"), (1, 0, "flip")], STAGE_RESET
            )
            psi = run.pulses(psi, [(1, 1, "flip")], STAGE_RESET)
            run.roles = (run.roles[1], run.roles[2], run.roles[0])
            _snapshot_reset(rec, psi, "double", run.roles)
        else:
            raise _Abort(INVALID, "more than two clicks in the main window")
    raise _Abort(EXHAUSTED, "no heralding click within the repetition budget")


def _snapshot_reset(rec: ProtocolRecord, psi, kind, roles):
    """Keep the state right after the first reset so its quality is auditable."""
    if rec.post_reset_state is None:
        rec.post_reset_state = normalized(psi)
        rec.post_reset_kind = kind
        rec.post_reset_roles = roles


def _entangle(run: _Run, psi):
    """Herald one shared photon between the ancilla and receiver atom 1."""
    swaps = [(0, run.roles[2], "swap"), (1, 0, "swap")]
    for retry in range(PREP_RETRY_LIMIT):
        psi = run.pulses(psi, swaps, STAGE_PREP)
        psi, detector, _ = run.window(psi, STAGE_PREP, stop_after_first=True)
        if detector:
            run.rec.prep_sign = detector[0].sign
            return run.pulses(psi, swaps, STAGE_PREP)
        # No click in a window many lifetimes long: photons were lost to
        # numerical residue. Put the swapped atoms back and retry.
        run.emit("reset", kind="entangle_retry")
        psi = run.pulses(psi, [(0, run.roles[2], "flip"), (1, 0, "flip")], STAGE_PREP)
    raise _Abort(INVALID, "entanglement herald never clicked")


def _encode(run: _Run, psi):
    d1, d2, anc = run.roles
    psi = run.pulses(psi, [(0, d1, "swap")], STAGE_ENCODE)
    psi = run.pulses(psi, [(0, anc, "swap_all")], STAGE_ENCODE)
    psi = run.pulses(psi, [(0, d2, "swap_double")], STAGE_ENCODE)
    psi = run.pulses(psi, [(0, anc, "swap_double"), (1, 1, "half_swap")], STAGE_ENCODE)
    return psi


def _confirm_and_recover(run: _Run, psi, rules: PhaseRules):
    rec = run.rec
    psi = run.pulses(psi, [(0, run.roles[2], "swap")], STAGE_DETECT_CONFIRM)
    psi, detector, _ = run.window(psi, STAGE_DETECT_CONFIRM)
    if len(detector) > 1:
        raise _Abort(INVALID, "multiple clicks in the confirming window")
    if len(detector) == 1:
        rec.branch = "click"
        rec.branch_phase = rules.click_branch_phase(rec)
        rec.recovery_wait = rules.click_recovery_wait(rec.branch_phase)
        rec.pre_recovery_state = psi.copy()
        psi = run.pulses(psi, [(1, 0, "swap")], STAGE_RECOVERY)
        psi = run.wait(psi, rec.recovery_wait, STAGE_RECOVERY)
        psi = run.pulses(psi, [(1, 0, "swap")], STAGE_RECOVERY)
        rec.outcome = SUCCESS_FINAL_CLICK
    else:
        rec.branch = "silent"
        rec.branch_phase = rules.silent_branch_phase(rec)
        rec.recovery_wait = rules.silent_recovery_wait(rec.branch_phase)
        rec.pre_recovery_state = psi.copy()
        psi = run.pulses(psi, [(1, 0, "swap")], STAGE_RECOVERY)
        psi = run.pulses(psi, [(1, 1, "swap")], STAGE_RECOVERY)
        psi = run.wait(psi, rec.recovery_wait, STAGE_RECOVERY)
        psi = run.pulses(psi, [(1, 0, "swap")], STAGE_RECOVERY)
        rec.outcome = SUCCESS_FINAL_SILENT
    rec.final_state = normalized(psi)
    run.emit("outcome", outcome=rec.outcome)
    return psi
