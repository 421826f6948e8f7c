"""Compiled kernels vs the NumPy fallback on problem sizes the experiments use.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel and size with the best-of-N time for each backend,
the speedup and the largest absolute difference between the two results.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from catres import _fallback
from catres.analysis import cat_layout
from catres.dynamics import optical_loss_channels, thermal_channels
from catres.hilbert import coherent_amplitudes, product_state, sector_indices
from catres.kernels import as_csr32
from catres.model import TWO_PI, build_two_phonon_hamiltonian

try:
    from catres import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def wigner_case(dim: int, points: int):
    rng = np.random.default_rng(dim)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    x = np.linspace(-5.5, 5.5, points)
    return (rho, x, x)


def lindblad_case(n: int, mech_dim: int):
    g = 25e3
    lay = cat_layout(n, mech_dim)
    H = build_two_phonon_hamiltonian(g, lay)
    sub = sector_indices(lay, ["a+", "a-"], max_total=n)
    chans = thermal_channels(lay, "b", 10.0, 5.0) + optical_loss_channels(lay, g, {"a+": 0.25, "a-": 0.25})
    Ls = [np.sqrt(TWO_PI * c.rate) * c.operator.sparse[sub][:, sub] for c in chans]
    heff = H.sparse[sub][:, sub].astype(complex)
    for L in Ls:
        heff = heff - 0.5j * (L.conj().T @ L)
    psi = product_state(lay, {"a+": n, "b": coherent_amplitudes(3.0, mech_dim)}).amplitudes[sub]
    rho = np.outer(psi, psi.conj())
    return (rho, as_csr32(heff), [as_csr32(L) for L in Ls])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; nothing to compare")
        return 1
    cases = [
        ("wigner_grid", f"dim={d} grid={p}x{p}", wigner_case(d, p), "wigner_grid")
        for d, p in ((20, 101), (40, 201), (60, 201))
    ] + [
        ("lindblad_rhs", f"n={n} mech_dim={m} sector={sector_indices(cat_layout(n, m), ['a+', 'a-'], max_total=n).size}",
         lindblad_case(n, m), "lindblad_rhs")
        for n, m in ((1, 40), (3, 44), (5, 48))
    ]
    print(f"{'kernel':<14}{'case':<34}{'cython s':>11}{'numpy s':>11}{'speedup':>9}{'max |diff|':>12}")
    for name, label, inputs, attr in cases:
        fc, fp = getattr(_kernels, attr), getattr(_fallback, attr)
        tc = best_of(lambda: fc(*inputs), args.repeat)
        tp = best_of(lambda: fp(*inputs), args.repeat)
        diff = float(np.max(np.abs(fc(*inputs) - fp(*inputs))))
        print(f"{name:<14}{label:<34}{tc:>11.4f}{tp:>11.4f}{tp / tc:>8.1f}x{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
