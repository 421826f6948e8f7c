"""Unitary and Lindblad time evolution on truncated Fock spaces.

Times are in seconds and Hamiltonians in rad/s.  Collapse rates are given in
Hz and multiplied by 2 pi when the master equation is assembled.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.constants as const
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, ContractError, IntegrationError, SubstepError
from .kernels import as_csr32, lindblad_rhs
from .hilbert import MixedState, OperatorMatrix, PureState, annihilation
from .model import TWO_PI, TimeDependentHamiltonian

NORM_WARN = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_samples: int
    rtol: float = 1e-8

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigurationError("a time grid needs at least two samples")
        if not self.t_end > self.t_start:
            raise ConfigurationError("t_end must exceed t_start")

    @classmethod
    def at(cls, times, rtol: float = 1e-8) -> "ExplicitGrid":
        return ExplicitGrid(tuple(float(t) for t in times), rtol)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_samples)


@dataclass(frozen=True)
class ExplicitGrid:
    """Strictly increasing list of sample times."""

    samples: tuple[float, ...]
    rtol: float = 1e-8

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.size < 2 or np.any(np.diff(s) <= 0):
            raise ConfigurationError("sample times must be strictly increasing, at least two")

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=float)


@dataclass(frozen=True)
class CollapseChannel:
    operator: OperatorMatrix
    rate: float  # Hz
    label: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ConfigurationError(f"collapse rate must be >= 0, got {self.rate}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: list | None
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    norm_drift: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def final_state(self):
        return self.states[-1] if self.states else None

    @property
    def max_drift(self) -> float:
        return float(np.max(self.norm_drift)) if self.norm_drift is not None else 0.0


def _flag(traj: Trajectory):
    if traj.max_drift > NORM_WARN:
        msg = f"norm/trace drift {traj.max_drift:.2e} exceeds {NORM_WARN:g}"
        traj.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def _check_hermitian(H: OperatorMatrix, rtol: float = 1e-10):
    scale = max(1.0, H.max_abs())
    if not H.is_hermitian(atol=rtol * scale):
        raise ContractError("Hamiltonian is not Hermitian")


def reachable_indices(ops, seed: np.ndarray, n: int) -> np.ndarray:
    """Basis states connected to ``seed`` through the nonzero pattern of ``ops``."""
    pattern = sp.csr_matrix((n, n), dtype=bool)
    for m in ops:
        pattern = pattern + (abs(m) > 0)
    pattern = pattern + pattern.T
    _, lab = connected_components(pattern, directed=False)
    keep = np.isin(lab, np.unique(lab[seed]))
    return np.flatnonzero(keep)


def _support(v: np.ndarray, tol: float = 0.0) -> np.ndarray:
    return np.flatnonzero(np.abs(v) > tol)


def _observe(observables, layout, sub, vecs_sub):
    out = {}
    for name, op in (observables or {}).items():
        if op.layout != layout:
            raise ConfigurationError(f"observable {name!r} lives on another layout")
        m = op.sparse[sub][:, sub]
        out[name] = np.array([np.vdot(v, m @ v).real for v in vecs_sub])
    return out


def _embed_vec(v_sub, sub, n):
    v = np.zeros(n, dtype=complex)
    v[sub] = v_sub
    return v


def evolve_unitary(
    H: OperatorMatrix,
    psi0: PureState,
    grid,
    observables: dict | None = None,
    keep_states: bool = True,
) -> Trajectory:
    """Solve i d/dt psi = H psi exactly on the sample grid.

    The propagator is built from an eigendecomposition of H restricted to the
    states reachable from psi0, so each sample is exact to rounding.
    """
    if H.layout != psi0.layout:
        raise ConfigurationError("Hamiltonian and state live on different layouts")
    _check_hermitian(H)
    n = H.layout.total_dim
    sub = reachable_indices([H.sparse], _support(psi0.amplitudes), n)
    h = H.sparse[sub][:, sub].toarray()
    w, V = np.linalg.eigh(h)
    resid = np.max(np.abs(h @ V - V * w), initial=0.0)
    scale = max(1.0, np.max(np.abs(w), initial=0.0))
    if resid > 1e-8 * scale:
        raise IntegrationError(f"eigendecomposition residual {resid:.2e} too large", achieved=resid / scale)
    c0 = V.conj().T @ psi0.amplitudes[sub]
    times = grid.times
    vecs = [V @ (np.exp(-1j * w * (t - times[0])) * c0) for t in times]
    drift = np.array([abs(np.linalg.norm(v) - 1.0) for v in vecs])
    traj = Trajectory(
        times=times,
        states=[PureState(H.layout, _embed_vec(v, sub, n), normalize=False) for v in vecs] if keep_states else None,
        observables=_observe(observables, H.layout, sub, vecs),
        norm_drift=drift,
        info={"method": "eigh", "subspace_dim": int(sub.size), "eig_residual": float(resid / scale)},
    )
    _flag(traj)
    if traj.max_drift > 1e-8:
        raise IntegrationError(f"norm drift {traj.max_drift:.2e} above 1e-8", achieved=traj.max_drift)
    return traj


class _TermCache:
    """Dense restrictions of the Hamiltonian terms onto a subspace."""

    def __init__(self, Ht: TimeDependentHamiltonian, sub: np.ndarray):
        self.ops = [t.operator.sparse[sub][:, sub].toarray() for t in Ht.terms]
        self.amps = np.array([t.amplitude for t in Ht.terms], dtype=complex)
        self.omegas = np.array([TWO_PI * t.frequency for t in Ht.terms])

    def at(self, t: float) -> np.ndarray:
        c = self.amps * np.exp(1j * self.omegas * t)
        out = np.zeros_like(self.ops[0]) if self.ops else None
        for ck, op in zip(c, self.ops):
            x = ck * op
            out += x + x.conj().T
        return out

    def norm_bound(self) -> float:
        return float(sum(2 * abs(a) * np.linalg.norm(o, 2) for a, o in zip(self.amps, self.ops)))


_GAUSS = math.sqrt(3.0) / 6.0


def _magnus_run(cache: _TermCache, v0: np.ndarray, times: np.ndarray, h_max: float) -> list[np.ndarray]:
    """Fourth-order Magnus integrator with two Gauss points per substep."""
    out = [v0.copy()]
    v = v0.copy()
    c3 = math.sqrt(3.0) / 12.0
    for t0, t1 in zip(times[:-1], times[1:]):
        nsub = max(1, int(math.ceil((t1 - t0) / h_max - 1e-12)))
        h = (t1 - t0) / nsub
        for s in range(nsub):
            ts = t0 + s * h
            H1 = cache.at(ts + h * (0.5 - _GAUSS))
            H2 = cache.at(ts + h * (0.5 + _GAUSS))
            K = 0.5 * h * (H1 + H2) - 1j * c3 * h * h * (H2 @ H1 - H1 @ H2)
            w, U = np.linalg.eigh(0.5 * (K + K.conj().T))
            v = U @ (np.exp(-1j * w) * (U.conj().T @ v))
        out.append(v.copy())
    return out


def evolve_time_dependent(
    H: TimeDependentHamiltonian,
    psi0: PureState,
    grid,
    substep: float | None = None,
    observables: dict | None = None,
    keep_states: bool = True,
    richardson: bool = True,
    phase_per_step: float = 0.2,
) -> Trajectory:
    """Time-ordered evolution under H(t) with fixed Magnus substeps.

    The substep may not exceed 1/(20 f_max) for the fastest term frequency.
    With ``richardson`` the run is repeated at half the substep and the final
    states must agree to 1e-6 in infidelity; the finer run is returned.
    """
    if H.layout != psi0.layout:
        raise ConfigurationError("Hamiltonian and state live on different layouts")
    fmax = H.max_frequency
    bound = 1.0 / (20.0 * fmax) if fmax > 0 else math.inf
    if substep is not None and substep > bound * (1 + 1e-12):
        raise SubstepError(f"substep {substep:.3e} s exceeds 1/(20 f_max) = {bound:.3e} s", required=bound)
    n = H.layout.total_dim
    ops = []
    for t in H.terms:
        ops.append(t.operator.sparse)
    sub = reachable_indices(ops, _support(psi0.amplitudes), n) if ops else _support(psi0.amplitudes)
    cache = _TermCache(H, sub)
    times = grid.times
    if not cache.ops:
        vecs = [psi0.amplitudes[sub].copy() for _ in times]
        achieved = 0.0
    else:
        if substep is None:
            nb = cache.norm_bound()
            substep = min(bound, phase_per_step / nb if nb > 0 else math.inf, float(np.min(np.diff(times))))
        v0 = psi0.amplitudes[sub].astype(complex)
        vecs = _magnus_run(cache, v0, times, substep)
        achieved = 0.0
        if richardson and fmax > 0:
            fine = _magnus_run(cache, v0, times, substep / 2)
            achieved = float(1.0 - abs(np.vdot(vecs[-1], fine[-1])) ** 2)
            if achieved > 1e-6:
                raise IntegrationError(f"halving the substep changed the final state by {achieved:.2e}", achieved=achieved)
            vecs = fine
            substep = substep / 2
    drift = np.array([abs(np.linalg.norm(v) - 1.0) for v in vecs])
    traj = Trajectory(
        times=times,
        states=[PureState(H.layout, _embed_vec(v, sub, n), normalize=False) for v in vecs] if keep_states else None,
        observables=_observe(observables, H.layout, sub, vecs),
        norm_drift=drift,
        info={"method": "magnus4", "substep": substep, "richardson_infidelity": achieved, "subspace_dim": int(sub.size)},
    )
    _flag(traj)
    if traj.max_drift > 1e-8:
        raise IntegrationError(f"norm drift {traj.max_drift:.2e} above 1e-8", achieved=traj.max_drift)
    return traj


def _invariant(m: sp.spmatrix, sub: np.ndarray, n: int) -> bool:
    outside = np.ones(n, dtype=bool)
    outside[sub] = False
    leak = m[outside][:, sub]
    return leak.nnz == 0 or float(abs(leak).max()) == 0.0


def evolve_lindblad(
    H: OperatorMatrix,
    channels: list[CollapseChannel],
    rho0,
    grid,
    observables: dict | None = None,
    keep_states: bool = True,
    subspace: np.ndarray | None = None,
    atol: float = 1e-10,
    max_dim: int | None = None,
) -> Trajectory:
    """Integrate the Lindblad master equation with an adaptive Dormand-Prince 8(5,3) scheme.

    ``subspace`` restricts the problem to basis states that H and every
    collapse operator leave invariant (e.g. photon number <= n); states are
    embedded back into the full layout on return.
    """
    layout = H.layout
    if isinstance(rho0, PureState):
        rho0 = rho0.to_mixed()
    if rho0.layout != layout:
        raise ConfigurationError("Hamiltonian and state live on different layouts")
    _check_hermitian(H)
    n = layout.total_dim
    sub = np.arange(n) if subspace is None else np.asarray(subspace)
    for ch in channels:
        if ch.operator.layout != layout:
            raise ConfigurationError(f"channel {ch.label!r} lives on another layout")
    if subspace is not None:
        mats = [H.sparse] + [c.operator.sparse for c in channels if c.rate > 0]
        if not all(_invariant(m, sub, n) for m in mats):
            raise ConfigurationError("subspace is not invariant under the Hamiltonian and collapse operators")
        r = rho0.rho
        outside = np.setdiff1d(np.arange(n), sub)
        if outside.size and np.max(np.abs(r[outside]), initial=0.0) > 0:
            raise ConfigurationError("initial state has weight outside the subspace")
    m = sub.size
    if max_dim is not None and m > max_dim:
        raise ConfigurationError(
            f"density-matrix dimension {m} exceeds the cap {max_dim}; project onto a photon-number sector"
        )
    Hs = H.sparse[sub][:, sub].tocsr()
    Ls = []
    heff = Hs.astype(complex)
    for ch in channels:
        if ch.rate == 0:
            continue
        L = (math.sqrt(TWO_PI * ch.rate) * ch.operator.sparse[sub][:, sub]).tocsr()
        Ls.append((L, None))
        heff = heff - 0.5j * (L.conj().T @ L)
    heff = as_csr32(heff)
    jumps = [as_csr32(L) for L, _ in Ls]

    # Runge-Kutta stages are real combinations of Hermitian matrices, so rho stays
    # Hermitian and rho Heff^+ = (Heff rho)^+.
    def rhs(_t, y):
        return lindblad_rhs(y.reshape(m, m), heff, jumps).reshape(-1)

    times = grid.times
    r0 = rho0.rho[np.ix_(sub, sub)].astype(complex)
    sol = solve_ivp(rhs, (times[0], times[-1]), r0.reshape(-1), method="DOP853", t_eval=times, rtol=grid.rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"master equation integration failed: {sol.message}")
    rhos = [sol.y[:, k].reshape(m, m) for k in range(len(times))]
    rhos = [0.5 * (r + r.conj().T) for r in rhos]
    drift = np.array([abs(np.trace(r).real - 1.0) for r in rhos])
    floor = min(float(np.linalg.eigvalsh(r).min()) for r in rhos)
    obs = {}
    for name, op in (observables or {}).items():
        om = op.sparse[sub][:, sub]
        obs[name] = np.array([np.sum(om.multiply(r.T)).real for r in rhos])
    states = None
    if keep_states:
        states = []
        for r in rhos:
            full = np.zeros((n, n), dtype=complex)
            full[np.ix_(sub, sub)] = r
            states.append(MixedState(layout, full, check=False))
    traj = Trajectory(
        times=times,
        states=states,
        observables=obs,
        norm_drift=drift,
        info={"method": "DOP853", "nfev": int(sol.nfev), "eigen_floor": floor, "subspace_dim": int(m)},
    )
    _flag(traj)
    if traj.max_drift > 1e-7:
        raise IntegrationError(f"trace drift {traj.max_drift:.2e} above 1e-7", achieved=traj.max_drift)
    if floor < -1e-6:
        traj.warnings.append(f"density matrix eigenvalue {floor:.2e} below -1e-6")
    return traj


def thermal_occupation(omega_m: float, T: float) -> float:
    """Bose-Einstein occupation of a mode at ``omega_m`` Hz and temperature T (K)."""
    if T <= 0:
        raise ConfigurationError("temperature must be positive")
    x = const.h * omega_m / (const.k * T)
    return float(1.0 / math.expm1(x))


def thermal_channels(layout, mode: str, gamma: float, n_th: float) -> list[CollapseChannel]:
    """Damping sqrt(gamma (n_th+1)) b and heating sqrt(gamma n_th) b^+ on ``mode``."""
    b = annihilation(layout, mode)
    out = [CollapseChannel(b, gamma * (n_th + 1.0), f"{mode} damping")]
    if n_th > 0:
        out.append(CollapseChannel(b.dagger(), gamma * n_th, f"{mode} heating"))
    return out


def optical_loss_channels(layout, kappa: float, weights: dict[str, float]) -> list[CollapseChannel]:
    """Photon loss sqrt(kappa w_k) a_k for each supermode k with weight w_k."""
    return [CollapseChannel(annihilation(layout, m), kappa * w, f"{m} loss") for m, w in weights.items()]
