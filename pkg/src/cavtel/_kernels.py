"""Hot numeric kernels with optional numba acceleration.

Every kernel has two implementations with identical semantics: a numba
``@njit`` version and a pure-numpy fallback. The active set is chosen at
import time: numba is used when it imports cleanly and the environment
variable ``CAVTEL_NUMBA`` is not set to ``0``/``false``/``off``. Callers
import the dispatched names; ``benchmarks/bench_kernels.py`` times both
paths side by side.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("CAVTEL_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "off", "no")

try:
    if not _WANT_NUMBA:
        raise ImportError("numba disabled by CAVTEL_NUMBA")
    import numba

    NUMBA_ACTIVE = True
except ImportError:
    NUMBA_ACTIVE = False


def coo_apply_numpy(rows, cols, vals, psi, out):
    """out += A @ psi for A in coordinate form. Duplicate entries accumulate."""
    np.add.at(out, rows, vals * psi[cols])
    return out


def phase_decay_apply_numpy(amps, phase, decay, t):
    """amps * exp((i*phase - decay) * t), elementwise."""
    return amps * np.exp((1j * phase - decay) * t)


def survival_solve_numpy(weights, rates, u, t_max):
    """First t in (0, t_max] where sum_i weights[i]*exp(-rates[i]*t) == u.

    The sum is the squared norm of a state under diagonal decay; it is
    monotone nonincreasing. Returns -1.0 when the survival at t_max still
    exceeds u (no jump inside the window). Bisection to 1e-12 relative.
    """
    s_end = float(np.sum(weights * np.exp(-rates * t_max)))
    if s_end > u:
        return -1.0
    lo, hi = 0.0, t_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = float(np.sum(weights * np.exp(-rates * mid)))
        if s > u:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * t_max:
            break
    return 0.5 * (lo + hi)


def pair_rotate_numpy(amps, partner, cosv, sinv, fac):
    """Pairwise rotation new[i] = fac[i]*(cosv[i]*amps[i] + i*sinv[i]*amps[partner[i]]).

    Inert components use partner[i] == i with sinv[i] == 0.
    """
    return fac * (cosv * amps + 1j * sinv * amps[partner])


def eig_propagate_numpy(vmat, wmat, lam, psi, t):
    """exp(-i*H*t) @ psi through the cached eigensystem H = V diag(lam) W."""
    return vmat @ (np.exp(-1j * lam * t) * (wmat @ psi))


if NUMBA_ACTIVE:

    @numba.njit(cache=True)
    def coo_apply_numba(rows, cols, vals, psi, out):
        for k in range(rows.shape[0]):
            out[rows[k]] += vals[k] * psi[cols[k]]
        return out

    @numba.njit(cache=True)
    def phase_decay_apply_numba(amps, phase, decay, t):
        out = np.empty_like(amps)
        for i in range(amps.shape[0]):
            out[i] = amps[i] * np.exp((1j * phase[i] - decay[i]) * t)
        return out

    @numba.njit(cache=True)
    def survival_solve_numba(weights, rates, u, t_max):
        s_end = 0.0
        for i in range(weights.shape[0]):
            s_end += weights[i] * np.exp(-rates[i] * t_max)
        if s_end > u:
            return -1.0
        lo, hi = 0.0, t_max
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            s = 0.0
            for i in range(weights.shape[0]):
                s += weights[i] * np.exp(-rates[i] * mid)
            if s > u:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * t_max:
                break
        return 0.5 * (lo + hi)

    @numba.njit(cache=True)
    def pair_rotate_numba(amps, partner, cosv, sinv, fac):
        out = np.empty_like(amps)
        for i in range(amps.shape[0]):
            out[i] = fac[i] * (cosv[i] * amps[i] + 1j * sinv[i] * amps[partner[i]])
        return out

    @numba.njit(cache=True)
    def eig_propagate_numba(vmat, wmat, lam, psi, t):
        w = np.dot(wmat, psi)
        for i in range(w.shape[0]):
            w[i] *= np.exp(-1j * lam[i] * t)
        return np.dot(vmat, w)

    coo_apply = coo_apply_numba
    phase_decay_apply = phase_decay_apply_numba
    survival_solve = survival_solve_numba
    pair_rotate = pair_rotate_numba
    eig_propagate = eig_propagate_numba
else:
    coo_apply = coo_apply_numpy
    phase_decay_apply = phase_decay_apply_numpy
    survival_solve = survival_solve_numpy
    pair_rotate = pair_rotate_numpy
    eig_propagate = eig_propagate_numpy
