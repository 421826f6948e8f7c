"""Invariants checked over generated inputs."""
import math

import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from catres import kernels
from catres.analysis import cat_layout, fidelity, photon_number_measurement, wigner
from catres.artifacts import fmt
from catres.config import config_hash
from catres.dynamics import TimeGrid, evolve_unitary
from catres.hilbert import (
    MECHANICAL,
    ModeLayout,
    PureState,
    annihilation,
    coherent_amplitudes,
    commutator,
    creation,
    number,
    required_dim,
)
from catres.model import (
    EffectiveModel,
    SystemParams,
    build_effective_hamiltonian,
    build_two_phonon_hamiltonian,
    optical_coupling_matrix,
    supermode_transform,
)

finite = dict(allow_nan=False, allow_infinity=False)
amp = st.complex_numbers(max_magnitude=2.5, **finite)


def vec(n):
    return arrays(np.complex128, n, elements=st.complex_numbers(max_magnitude=1.0, **finite)).filter(
        lambda v: np.linalg.norm(v) > 1e-3
    )


@given(amp, st.sampled_from([1e-6, 1e-8, 1e-12]))
def test_coherent_amplitudes_normalised(alpha, tol):
    d = required_dim(alpha, tol)
    c = coherent_amplitudes(alpha, d, tol)
    assert abs(np.linalg.norm(c) - 1.0) < 1e-12
    assert required_dim(alpha, tol / 100) >= d


@given(st.integers(3, 12), st.integers(2, 4))
def test_ladder_algebra(d1, d2):
    lay = ModeLayout.of(("a", d2), ("b", d1, MECHANICAL))
    b = annihilation(lay, "b")
    assert (b.dagger() - creation(lay, "b")).max_abs() == 0
    assert (creation(lay, "b") @ b - number(lay, "b")).max_abs() < 1e-14
    c = commutator(b, b.dagger()).dense()
    occ = lay.occupation_table()[:, 1]
    low = occ < d1 - 1
    np.testing.assert_allclose(c[np.ix_(low, low)], np.eye(low.sum()), atol=1e-13)
    # composition reverses under the adjoint
    x = b @ number(lay, "a")
    assert (x.dagger() - number(lay, "a").dagger() @ b.dagger()).max_abs() < 1e-14


@given(st.floats(1e14, 3e14), st.floats(0.5e6, 2e6), st.floats(5.0, 50.0), st.floats(2e9, 2e10))
def test_supermode_matrix_diagonalises(omega1, g0, ratio, omega_m):
    p = SystemParams.at_two_phonon_resonance(g0, ratio * g0, omega_m, -1.0, omega1=omega1)
    sm = supermode_transform(p)
    np.testing.assert_allclose(sm.M @ sm.M.T, np.eye(3), atol=1e-12)
    D = sm.M @ optical_coupling_matrix(p) @ sm.M.T
    off = D - np.diag(np.diag(D))
    assert np.abs(off).max() < 1e-12 * omega1
    assert sm.omega_plus > sm.omega_zero > sm.omega_minus
    assert abs(sm.two_phonon_detuning + g0**2 / (8 * ratio * g0)) < 1e-3 * g0


@given(st.floats(1e3, 1e5), st.floats(-1e4, 1e4), st.booleans(), st.integers(1, 3))
def test_effective_model_conserves_photons(g, det, kerr, n):
    lay = cat_layout(n, 8)
    H = build_effective_hamiltonian(EffectiveModel(g, det, kerr), lay)
    N = number(lay, "a+") + number(lay, "a-")
    for t in (0.0, 1.3e-6):
        Ht = H.at(t)
        assert Ht.is_hermitian(1e-12 * Ht.max_abs())
        assert commutator(Ht, N).max_abs() < 1e-9 * Ht.max_abs()


@given(st.floats(1e3, 1e5), st.integers(1, 3))
def test_two_phonon_conserves_excitations(g, n):
    lay = cat_layout(n, 9)
    H = build_two_phonon_hamiltonian(g, lay)
    C = 2 * number(lay, "a+") + number(lay, "b")
    assert commutator(H, C).max_abs() < 1e-9 * H.max_abs()


@given(vec(36), st.floats(1e-7, 2e-5))
def test_unitary_evolution_preserves_norm(v, t):
    lay = cat_layout(1, 4)
    psi = PureState(lay, v)
    H = build_two_phonon_hamiltonian(25e3, lay)
    tr = evolve_unitary(H, psi, TimeGrid(0, t, 3))
    assert tr.max_drift < 1e-10
    N = number(lay, "a+") + number(lay, "a-")
    assert abs(N.expect(tr.final_state).real - N.expect(psi).real) < 1e-9


@given(vec(36))
def test_measurement_probabilities_sum_to_one(v):
    psi = PureState(cat_layout(1, 4), v)
    out = photon_number_measurement(psi, prob_floor=0.0)
    assert abs(sum(o.probability for o in out) - 1.0) < 1e-12
    probs = [o.probability for o in out]
    assert probs == sorted(probs, reverse=True) or max(abs(a - b) for a, b in zip(probs, sorted(probs, reverse=True))) < 1e-12


@given(vec(8), vec(8))
def test_fidelity_symmetric_and_bounded(u, v):
    lay = ModeLayout.of(("b", 8, MECHANICAL))
    a, b = PureState(lay, u), PureState(lay, v)
    f = fidelity(a, b)
    assert 0.0 <= f <= 1.0
    assert abs(f - fidelity(b, a)) < 1e-12
    assert abs(f - fidelity(a.to_mixed(), b.to_mixed())) < 1e-6


@given(vec(10))
def test_wigner_bounded_and_normalised(v):
    lay = ModeLayout.of(("b", 10, MECHANICAL))
    x = np.linspace(-6.5, 6.5, 105)
    W = wigner(PureState(lay, v), x)
    assert np.abs(W.values).max() <= 2 / math.pi + 1e-12
    assert abs(W.integral() - 1.0) < 1e-5


@given(st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_lindblad_rhs_preserves_trace_and_hermiticity(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = h + h.conj().T
    L = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    heff = H - 0.5j * L.conj().T @ L
    out = kernels.lindblad_rhs(rho, kernels.as_csr32(heff), [kernels.as_csr32(L)])
    assert abs(np.trace(out)) < 1e-10 * max(1.0, np.abs(out).max())
    np.testing.assert_allclose(out, out.conj().T, atol=1e-10 * max(1.0, np.abs(out).max()))


@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers() | st.floats(**finite), max_size=6))
def test_config_hash_ignores_key_order(d):
    rev = dict(reversed(list(d.items())))
    assert config_hash(d) == config_hash(rev)


@given(st.floats(**finite))
def test_table_format_roundtrips_to_twelve_digits(x):
    y = float(fmt(x))
    assert y == x or abs(y - x) <= 1e-11 * abs(x)
