"""Time each hot kernel's numba and numpy implementations side by side.

Sizes default to the shapes the protocol actually runs: an 800-dimensional
register for dense propagation and diagonal phasing, coordinate operators
with a few entries per row, and the 512-dimensional rotation tables of the
closed-form engine. The numba path is timed after one warm-up call so JIT
compilation is not billed to the kernel. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--dim N] [--repeats K]

With CAVTEL_NUMBA=0 (or numba missing) only the numpy column is reported.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from cavtel import _kernels as K


def _inputs(dim, rng):
    nnz = 6 * dim
    rows = rng.integers(0, dim, nnz).astype(np.int64)
    cols = rng.integers(0, dim, nnz).astype(np.int64)
    vals = rng.standard_normal(nnz) + 1j * rng.standard_normal(nnz)
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi /= np.linalg.norm(psi)
    phase = rng.standard_normal(dim)
    decay = rng.random(dim)
    weights = rng.random(dim)
    weights /= weights.sum()
    rates = rng.random(dim) * 2.0
    herm = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    herm = herm + herm.conj().T
    lam, v = np.linalg.eigh(herm)
    lam = lam.astype(complex)
    w = v.conj().T
    partner = np.arange(dim)
    half = dim // 2
    partner[:half], partner[half : 2 * half] = (
        np.arange(half) + half,
        np.arange(half),
    )
    ang = rng.random(dim) * np.pi
    fac = np.exp(1j * rng.random(dim))
    return {
        "coo_apply": (rows, cols, vals, psi, np.zeros(dim, complex)),
        "phase_decay_apply": (psi, phase, decay, 0.37),
        "survival_solve": (weights, rates, 0.2, 5.0),
        "pair_rotate": (psi, partner, np.cos(ang), np.sin(ang), fac),
        "eig_propagate": (v, w, lam, psi, 0.37),
    }


def _call(fn, args, name):
    if name == "coo_apply":
        rows, cols, vals, psi, out = args
        return fn(rows, cols, vals, psi, out.copy())
    return fn(*args)


def _time(fn, args, name, repeats):
    _call(fn, args, name)  # warm-up: JIT compile / cache touch
    best = min(
        timeit.repeat(lambda: _call(fn, args, name), number=20, repeat=repeats)
    )
    return best / 20 * 1e6


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dim", type=int, default=800)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--seed", type=int, default=12)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = _inputs(args.dim, rng)
    names = list(cases)

    print(f"dim={args.dim} repeats={args.repeats} numba_active={K.NUMBA_ACTIVE}")
    header = f"{'kernel':20s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name in names:
        inputs = cases[name]
        numpy_fn = getattr(K, f"{name}_numpy")
        t_numpy = _time(numpy_fn, inputs, name, args.repeats)
        if K.NUMBA_ACTIVE:
            numba_fn = getattr(K, f"{name}_numba")
            got = _call(numba_fn, inputs, name)
            want = _call(numpy_fn, inputs, name)
            if not np.allclose(got, want, rtol=1e-10, atol=1e-12):
                raise SystemExit(f"{name}: numba and numpy outputs diverge")
            t_numba = _time(numba_fn, inputs, name, args.repeats)
            print(f"{name:20s} {t_numpy:10.1f} {t_numba:10.1f} {t_numpy / t_numba:7.1f}x")
        else:
            print(f"{name:20s} {t_numpy:10.1f} {'-':>10s} {'-':>8s}")


if __name__ == "__main__":
    main()
