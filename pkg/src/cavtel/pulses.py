"""Closed-form pulse maps and the timing solver for the laser schedule.

With the strong laser on one atom, components group into two-state blocks
``(atom in 1, y photons) <-> (atom in 0, y+1 photons)``. A block with total
excitation ``beta = y + 1`` rotates at ``sqrt(beta) * rabi_exchange`` under
a shared phase built from the level shifts. Components with the atom in 0
and no photon are inert up to that phase. With both lasers on, blocks pair
``(1, y) <-> (0, y)`` at ``rabi_raman`` instead.

Pulse durations must serve several blocks at once, so they are chosen by a
winding search: find the duration whose rotation angles land closest to
the wanted multiples of pi/2 in every populated sector simultaneously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import pair_rotate, phase_decay_apply
from .params import PhysicalParams
from .spaces import Register

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PulseTimes:
    """Solved durations for the protocol's laser pulses, in us."""

    swap: float
    swap_all: float
    swap_double: float
    flip: float
    detect: float
    swap_all_windings: tuple[int, int]
    swap_all_residual: float
    swap_double_windings: tuple[int, int]
    swap_double_residual: float

    @property
    def half_swap(self) -> float:
        return 0.5 * self.swap

    def duration(self, kind: str) -> float:
        return {
            "swap": self.swap,
            "half_swap": self.half_swap,
            "swap_all": self.swap_all,
            "swap_double": self.swap_double,
            "flip": self.flip,
        }[kind]


# Rotation angles each pulse kind is meant to realize, by excitation sector.
# The winding search can only approximate the multi-sector targets; these
# are the exact angles the schedule is designed around.
PULSE_INTENT = {
    "swap": {1: HALF_PI},
    "half_swap": {1: 0.5 * HALF_PI},
    "swap_all": {1: HALF_PI, 2: HALF_PI},
    "swap_double": {1: 0.0, 2: HALF_PI},
}

FLIP_INTENT_ANGLE = HALF_PI


def _best_winding(single_target, max_winding, start=0):
    """Pick the winding count whose double-sector angle lands nearest pi/2.

    ``single_target`` is the single-sector angle modulo 2*pi (pi/2 or 0).
    Returns (n, m, residual) with residual the double-sector angle error in
    radians: sqrt(2)*(single_target + 2*pi*n) - (pi/2 + 2*pi*m).
    """
    best = None
    for n in range(start, max_winding + 1):
        angle = single_target + TWO_PI * n
        double = math.sqrt(2.0) * angle
        m = round((double - HALF_PI) / TWO_PI)
        if m < 0:
            continue
        residual = double - (HALF_PI + TWO_PI * m)
        if best is None or abs(residual) < abs(best[2]):
            best = (n, m, residual)
    return best


def solve_pulse_times(params: PhysicalParams, max_winding=20, detect_lifetimes=10.0) -> PulseTimes:
    rate = params.rabi_exchange
    n_all, m_all, res_all = _best_winding(HALF_PI, max_winding, start=0)
    n_dbl, m_dbl, res_dbl = _best_winding(0.0, max_winding, start=1)
    return PulseTimes(
        swap=HALF_PI / rate,
        swap_all=(HALF_PI + TWO_PI * n_all) / rate,
        swap_double=(TWO_PI * n_dbl) / rate,
        flip=HALF_PI / params.rabi_raman,
        detect=detect_lifetimes / params.cavity_decay,
        swap_all_windings=(n_all, m_all),
        swap_all_residual=res_all,
        swap_double_windings=(n_dbl, m_dbl),
        swap_double_residual=res_dbl,
    )


class PulseTruncationError(RuntimeError):
    """A pulse hit amplitude whose partner lies beyond the photon cutoff."""


class AnalyticEngine:
    """Closed-form state maps for two-level sites under the reduced model."""

    def __init__(self, space: Register, params: PhysicalParams):
        for shape in space.sites:
            if shape.levels != 2:
                raise ValueError("closed-form maps cover two-level atoms only")
        self.space = space
        self.params = params
        self._y = [space.photon_numbers(s) for s in range(len(space.sites))]
        self._n0 = [space.zero_level_count(s) for s in range(len(space.sites))]
        self.total_photons = np.sum(self._y, axis=0)
        self._exchange_tables = {}
        self._flip_tables = {}

    # -- table construction ----------------------------------------------------

    def _exchange_table(self, site, atom):
        key = (site, atom)
        if key not in self._exchange_tables:
            space = self.space
            x = space.atom_levels(site, atom)
            y = self._y[site]
            n0x = space.zero_level_count(site, exclude_atom=atom)
            cutoff = space.sites[site].cutoff
            dim = space.dim
            partner = np.arange(dim, dtype=np.int64)
            beta = np.zeros(dim, dtype=np.int64)
            da, dy = space.stride(site, atom), space.stride(site)
            up = (x == 1) & (y < cutoff)
            partner[up] = np.flatnonzero(up) - da + dy
            beta[up] = y[up] + 1
            down = (x == 0) & (y >= 1)
            partner[down] = np.flatnonzero(down) + da - dy
            beta[down] = y[down]
            beta[(x == 1) & (y == cutoff)] = -1
            self._exchange_tables[key] = (partner, beta, n0x)
        return self._exchange_tables[key]

    def _flip_table(self, site, atom):
        key = (site, atom)
        if key not in self._flip_tables:
            space = self.space
            x = space.atom_levels(site, atom)
            da = space.stride(site, atom)
            partner = np.arange(space.dim, dtype=np.int64)
            partner[x == 1] -= da
            partner[x == 0] += da
            n0x = space.zero_level_count(site, exclude_atom=atom)
            self._flip_tables[key] = (partner, n0x)
        return self._flip_tables[key]

    # -- waits -------------------------------------------------------------------

    def wait_exponents(self, sites=None, photon_shift=True, decay=True):
        """Per-index (phase, decay) rates for laser-off evolution.

        Phase rate per site: zeros * (detuning_offset + photons * shift_photon);
        decay rate: cavity_decay * photons. Flags drop the photon shift or
        the decay for idealized bookkeeping.
        """
        p = self.params
        dim = self.space.dim
        phase = np.zeros(dim)
        dec = np.zeros(dim)
        for s in sites if sites is not None else range(len(self.space.sites)):
            shift = p.detuning_offset + (p.shift_photon * self._y[s] if photon_shift else 0.0)
            phase += self._n0[s] * shift
            if decay:
                dec += p.cavity_decay * self._y[s]
        return phase, dec

    def apply_wait(self, psi, t, sites=None, photon_shift=True, decay=True):
        phase, dec = self.wait_exponents(sites, photon_shift, decay)
        return phase_decay_apply(psi, phase, dec, t)

    # -- laser pulses ---------------------------------------------------------------

    def apply_exchange_pulse(self, psi, site, atom, t, intent=None):
        """One strong-laser pulse on one atom, exact up to in-block averaging.

        ``intent`` optionally pins the rotation angle per excitation sector;
        sectors it omits rotate by the literal sqrt(beta)*rabi_exchange*t.
        """
        p = self.params
        partner, beta, n0x = self._exchange_table(site, atom)
        angles = np.where(beta > 0, np.sqrt(np.maximum(beta, 0)) * p.rabi_exchange * t, 0.0)
        if intent:
            for sector, angle in intent.items():
                angles[beta == sector] = angle
        top = beta < 0
        if np.any(top) and float(np.max(np.abs(psi[top]))) > 1e-12:
            raise PulseTruncationError("exchange pulse reached the photon cutoff")
        shift_q = np.where(beta > 0, beta * (2 * n0x + 1) - n0x, 0.0)
        fac = np.exp(1j * (p.detuning_offset * (n0x + 1) + 0.5 * p.shift_photon * shift_q) * t)
        return pair_rotate(psi, partner, np.cos(angles), np.sin(angles), fac)

    def apply_flip_pulse(self, psi, site, atom, t, intent_angle=None):
        """One two-laser pulse swapping levels 1 and 0 of one atom.

        Valid on photon-free states; photon-carrying components would leak
        through the exchange coupling, which this map does not include.
        """
        if float(np.max(np.abs(psi[self.total_photons > 0]), initial=0.0)) > 1e-12:
            raise PulseTruncationError("flip pulse applied while photons remain")
        partner, n0x = self._flip_table(site, atom)
        angle = self.params.rabi_raman * t if intent_angle is None else intent_angle
        fac = np.exp(1j * self.params.detuning_offset * (n0x + 1) * t)
        cosv = np.full(self.space.dim, math.cos(angle))
        sinv = np.full(self.space.dim, math.sin(angle))
        return pair_rotate(psi, partner, cosv, sinv, fac)

    # -- photon bookkeeping ------------------------------------------------------------

    def collapse_ops(self):
        """Unnormalized detector collapse maps for the two output ports."""
        space = self.space
        a0 = space.annihilate(0)
        if len(space.sites) > 1:
            a1 = space.annihilate(1)
            plus, minus = a0 + a1, a0 + a1.scaled(-1.0)
        else:
            plus = minus = a0
        scale = math.sqrt(self.params.cavity_decay)
        return plus.scaled(scale), minus.scaled(scale)

    def sector_weights(self, psi):
        """Population per total photon number."""
        w = np.zeros(int(self.total_photons.max()) + 1)
        np.add.at(w, self.total_photons, np.abs(psi) ** 2)
        return w

    def project_sector(self, psi, n_total):
        out = psi.copy()
        out[self.total_photons != n_total] = 0.0
        return out
