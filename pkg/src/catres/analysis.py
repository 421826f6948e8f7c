"""Measurement, phase-space and overlap diagnostics, plus closed-form oracles."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from . import kernels
from .errors import ConditioningError, ConfigurationError, ShapeError
from .hilbert import (
    MECHANICAL,
    OPTICAL,
    ModeLayout,
    MixedState,
    PureState,
    as_mixed,
    coherent_amplitudes,
    fock_state,
    number,
    partial_trace,
)
from .model import TWO_PI


@dataclass(frozen=True)
class MeasurementOutcome:
    record: tuple[int, ...]
    probability: float
    conditional_state: MixedState
    conditional_vector: PureState | None = None


def photon_number_measurement(
    state,
    optical_modes=("a+", "a-"),
    mechanical_mode: str = "b",
    prob_floor: float = 1e-10,
) -> list[MeasurementOutcome]:
    """Project the optical modes onto every joint photon-number record.

    Modes that are neither measured nor ``mechanical_mode`` are traced out.
    Outcomes are sorted by descending probability; ties (to 1e-12) go to the
    record with more photons left in the first optical mode.
    """
    layout = state.layout
    opt = [layout.position(m) for m in optical_modes]
    mech = layout.position(mechanical_mode)
    rest = [i for i in range(len(layout.modes)) if i not in opt and i != mech]
    dims = layout.dims
    dm = dims[mech]
    mech_layout = ModeLayout((layout.modes[mech],))
    out = []
    order = opt + [mech] + rest
    dr = int(np.prod([dims[i] for i in rest])) if rest else 1
    if isinstance(state, PureState):
        psi = np.transpose(state.amplitudes.reshape(dims), order).reshape([dims[i] for i in opt] + [dm, dr])
        for rec in itertools.product(*[range(dims[i]) for i in opt]):
            blk = psi[rec]  # (dm, dr)
            p = float(np.vdot(blk, blk).real)
            if p <= prob_floor:
                continue
            vec = None
            if dr == 1:
                vec = PureState(mech_layout, blk[:, 0])
                rho = vec.to_mixed()
            else:
                rho = MixedState(mech_layout, blk @ blk.conj().T / p, check=False)
            out.append(MeasurementOutcome(tuple(int(r) for r in rec), p, rho, vec))
    else:
        n = len(dims)
        r = state.rho.reshape(dims + dims)
        r = np.transpose(r, order + [n + i for i in order])
        od = [dims[i] for i in opt]
        r = r.reshape(od + [dm, dr] + od + [dm, dr])
        for rec in itertools.product(*[range(d) for d in od]):
            blk = r[rec]  # (dm, dr, *od, dm, dr)
            blk = blk[(slice(None), slice(None)) + rec]  # (dm, dr, dm, dr)
            red = np.einsum("ajbj->ab", blk)
            p = float(np.trace(red).real)
            if p <= prob_floor:
                continue
            red = red / p
            out.append(MeasurementOutcome(tuple(int(x) for x in rec), p, MixedState(mech_layout, 0.5 * (red + red.conj().T), check=False)))
    out.sort(key=lambda o: (-round(o.probability, 12), tuple(-x for x in o.record)))
    return out


def sector_probability(outcomes, total: int) -> float:
    """Summed probability of records carrying exactly ``total`` photons."""
    return float(sum(o.probability for o in outcomes if sum(o.record) == total))


@dataclass(frozen=True)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # shape (len(p_axis), len(x_axis))
    convention: str = "W(beta) = (2/pi) Tr[D(beta) Parity D(beta)^+ rho], beta = x + i p"
    mass: float = 1.0
    mass_warning: bool = False

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.values, self.x_axis, axis=1), self.p_axis))

    def peak(self) -> tuple[float, float]:
        j, i = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.x_axis[i]), float(self.p_axis[j])


def wigner(state, x_axis=None, p_axis=None) -> WignerGrid:
    """Wigner function of a single-mode state on an (x, p) grid."""
    rho = as_mixed(state)
    if len(rho.layout.modes) != 1:
        raise ShapeError("wigner needs a single-mode state; take a partial trace first")
    x = np.linspace(-5.5, 5.5, 201) if x_axis is None else np.asarray(x_axis, float)
    p = x if p_axis is None else np.asarray(p_axis, float)
    W = kernels.wigner_grid(rho.rho, x, p)
    mass = float(np.trapezoid(np.trapezoid(W, x, axis=1), p)) if x.size > 1 and p.size > 1 else float("nan")
    flag = not (abs(mass - 1.0) <= 1e-3)
    if flag:
        warnings.warn(f"Wigner grid holds {mass:.4f} of the state; enlarge the grid", RuntimeWarning, stacklevel=2)
    return WignerGrid(x, p, W, mass=mass, mass_warning=flag)


def _psd_sqrt(r: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (r + r.conj().T))
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def fidelity(a, b) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, squared convention."""
    if a.layout != b.layout:
        raise ShapeError(f"fidelity between layouts {a.layout.labels}{a.layout.dims} and {b.layout.labels}{b.layout.dims}")
    if isinstance(a, PureState) and isinstance(b, PureState):
        f = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    elif isinstance(a, PureState):
        f = np.vdot(a.amplitudes, b.rho @ a.amplitudes).real
    elif isinstance(b, PureState):
        f = np.vdot(b.amplitudes, a.rho @ b.amplitudes).real
    else:
        s = _psd_sqrt(a.rho)
        m = s @ b.rho @ s
        ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        f = float(np.sum(np.sqrt(np.clip(ev, 0, None)))) ** 2
    return float(min(1.0, max(0.0, f)))


def trace_distance(a, b) -> float:
    ra, rb = as_mixed(a).rho, as_mixed(b).rho
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(ra - rb))))


# --- closed-form oracles -------------------------------------------------------


def optical_layout(n: int, dim: int | None = None) -> ModeLayout:
    d = dim if dim is not None else n + 1
    return ModeLayout.of(("a+", d), ("a-", d))


def hopping_block(n: int, g: float) -> np.ndarray:
    """-g (a+^ a- + h.c.) on the n-photon states |n-k, k>, k = 0..n, in rad/s."""
    h = np.zeros((n + 1, n + 1))
    for k in range(n):
        h[k + 1, k] = h[k, k + 1] = -TWO_PI * g * math.sqrt((n - k) * (k + 1))
    return h


def spin_eigenvector(n: int, lam: int) -> np.ndarray:
    """Eigenvector of the n-photon hopping block with eigenvalue -lam*g (lam = n, n-2, ..., -n).

    The hopping term is diagonal in the modes c+- = (a+ +- a-)/sqrt 2; the
    eigenvector is (c+^)^p (c-^)^(n-p)|0> with p = (n + lam)/2 expanded in
    |n-k, k>.  Sign fixed so the |n, 0> entry is positive.
    """
    if (n + lam) % 2 or abs(lam) > n:
        raise ConfigurationError(f"lam={lam} is not an eigen-branch of n={n}")
    p = (n + lam) // 2
    poly = np.array([1.0])
    for _ in range(p):
        poly = np.convolve(poly, [1.0, 1.0])
    for _ in range(n - p):
        poly = np.convolve(poly, [1.0, -1.0])
    # poly[k] multiplies (a+^)^(n-k) (a-^)^k
    out = np.array([poly[k] * math.sqrt(math.factorial(n - k) * math.factorial(k)) for k in range(n + 1)])
    out /= math.sqrt(2.0**n * math.factorial(p) * math.factorial(n - p))
    if out[0] < 0:
        out = -out
    return out


@dataclass(frozen=True)
class EigenPair:
    label: str
    energy: float  # rad/s
    state: PureState


def three_photon_eigensystem(g: float) -> list[EigenPair]:
    """Closed-form eigenpairs of -g (a+^ a- + h.c.) in the three-photon subspace.

    Order: psi+, psi-, phi+, phi-; energies -3g, +3g, -g, +g (rad/s).
    """
    lay = optical_layout(3)
    s3 = math.sqrt(3.0)
    c = 1.0 / (2.0 * math.sqrt(2.0))
    basis = [fock_state(lay, (3 - k, k)).amplitudes for k in range(4)]
    table = [
        ("psi+", -3.0, (1.0, s3, s3, 1.0)),
        ("psi-", 3.0, (1.0, -s3, s3, -1.0)),
        ("phi+", -1.0, (s3, 1.0, -1.0, -s3)),
        ("phi-", 1.0, (s3, -1.0, -1.0, s3)),
    ]
    out = []
    for label, e, coeffs in table:
        v = c * sum(ck * bk for ck, bk in zip(coeffs, basis))
        out.append(EigenPair(label, e * TWO_PI * g, PureState(lay, v, normalize=False)))
    return out


def cat_layout(n: int, mech_dim: int, optical_dim: int | None = None) -> ModeLayout:
    d = optical_dim if optical_dim is not None else n + 2
    return ModeLayout.of(("a+", d, OPTICAL), ("a-", d, OPTICAL), ("b", mech_dim, MECHANICAL))


def rotation_rates(n: int) -> list[int]:
    """Rotation rates (units of g) of the n+1 optical eigen-branches: n, n-2, ..., -n."""
    return [n - 2 * j for j in range(n + 1)]


def analytic_branches(n: int, alpha: complex, t: float, g: float, mech_dim: int, tail_tol=1e-8) -> list[np.ndarray]:
    """Unnormalised mechanical branch vectors paired with |n-k, k>, k = 0..n.

    Each optical eigen-branch with energy -lam*g rotates the coherent state to
    alpha*exp(i lam g t); component k carries the phase exp(i lam (n + 1/2 - 2k) g t).
    """
    gt = TWO_PI * g * t
    branches = [np.zeros(mech_dim, dtype=complex) for _ in range(n + 1)]
    for lam in rotation_rates(n):
        v = spin_eigenvector(n, lam)
        coh = coherent_amplitudes(alpha * np.exp(1j * lam * gt), mech_dim, tail_tol)
        for k in range(n + 1):
            branches[k] += v[0] * v[k] * np.exp(1j * lam * (n + 0.5 - 2 * k) * gt) * coh
    return branches


def analytic_cat_state(n: int, alpha: complex, t: float, g: float, mech_dim: int = 40, optical_dim: int | None = None) -> PureState:
    """Large-amplitude closed form of |n,0>|alpha> under the pure two-phonon Hamiltonian.

    The n = 3 case reproduces the four-branch decomposition into rotated
    coherent states at angles +-g t and +-3 g t; other n follow the same rule.
    The rotation law is exact only as |alpha| grows; at alpha = 3 the overlap
    with the numerically evolved state is about 0.93 for n = 1 and 0.55 for n = 3.
    """
    if int(n) != n or n < 1:
        raise ConfigurationError(f"unsupported photon number n={n}")
    n = int(n)
    lay = cat_layout(n, mech_dim, optical_dim)
    br = analytic_branches(n, alpha, t, g, mech_dim)
    psi = np.zeros(lay.dims, dtype=complex)
    for k, v in enumerate(br):
        psi[n - k, k, :] = v
    return PureState(lay, psi.reshape(-1))


@dataclass(frozen=True)
class CatDecomposition:
    components: tuple[tuple[complex, complex], ...]  # (amplitude, coherent label)
    residual: float

    @property
    def n_components(self) -> int:
        return len(self.components)


def coherent_basis(angles, radius: float, dim: int, phase: float = 0.0) -> np.ndarray:
    return np.array([coherent_amplitudes(radius * np.exp(1j * (a + phase)), dim, tail_tol=None) for a in angles]).T


def cat_component_fit(state, angles, radius: float, max_overlap: float = 0.99) -> CatDecomposition:
    """Project a single-mode state onto span{|radius e^{i theta_k}>}.

    ``residual`` is 1 - <P> with P the projector onto the span, so it is the
    weight the coherent components cannot account for.
    """
    angles = list(angles)
    if not angles:
        raise ConfigurationError("need at least one candidate angle")
    lay = state.layout
    if len(lay.modes) != 1:
        raise ShapeError("cat_component_fit needs a single-mode state")
    d = lay.dims[0]
    B = coherent_basis(angles, radius, d)
    G = B.conj().T @ B
    nrm = np.sqrt(np.real(np.diag(G)))
    ov = np.abs(G) / np.outer(nrm, nrm)
    np.fill_diagonal(ov, 0.0)
    if ov.size and ov.max() > max_overlap:
        raise ConditioningError(f"coherent components overlap by {ov.max():.4f} > {max_overlap}")
    Q, _ = np.linalg.qr(B)
    if isinstance(state, PureState):
        v = state.amplitudes
        resid = 1.0 - float(np.linalg.norm(Q.conj().T @ v) ** 2)
        target = v
    else:
        r = state.rho
        resid = 1.0 - float(np.real(np.trace(Q.conj().T @ r @ Q))) / float(np.trace(r).real)
        w, V = np.linalg.eigh(r)
        target = V[:, -1]
    coef = np.linalg.solve(G, B.conj().T @ target)
    labels = [radius * np.exp(1j * a) for a in angles]
    return CatDecomposition(tuple((complex(c), complex(l)) for c, l in zip(coef, labels)), max(0.0, resid))


def occupation_series(traj, mode: str) -> np.ndarray:
    """<n> of ``mode`` at every stored sample of a trajectory."""
    if traj.states is None:
        raise ConfigurationError("trajectory was run without keep_states")
    layout = traj.states[0].layout
    op = number(layout, mode)
    return np.array([op.expect(s).real for s in traj.states])


def number_distribution(state, mode: str) -> np.ndarray:
    red = partial_trace(state, [mode])
    p = np.clip(np.real(np.diag(red.rho)), 0.0, None)
    return p / p.sum()


def fit_rabi(times, population, omega_guess: float | None = None) -> tuple[float, float]:
    """Fit A sin^2(Omega t) to a transfer curve; returns (Omega in rad/s, A).

    Without a guess, Omega is seeded by a scan over frequencies up to the grid
    Nyquist limit, with A solved in closed form at each trial frequency.
    """
    t = np.asarray(times, float)
    y = np.asarray(population, float)
    if omega_guess is None:
        span = t[-1] - t[0]
        dt = np.min(np.diff(t))
        trial = np.linspace(0.25 * math.pi / span, 0.5 * math.pi / dt, 4000)
        basis = np.sin(np.outer(trial, t)) ** 2
        amp = basis @ y / np.maximum(np.einsum("ij,ij->i", basis, basis), 1e-300)
        cost = np.sum((amp[:, None] * basis - y) ** 2, axis=1)
        omega_guess = trial[int(np.argmin(cost))]
    popt, _ = curve_fit(lambda tt, om, a: a * np.sin(om * tt) ** 2, t, y, p0=[omega_guess, max(y.max(), 1e-6)])
    return abs(float(popt[0])), float(popt[1])
