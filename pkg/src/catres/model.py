"""Hamiltonians of the three-cavity / one-membrane optomechanical chain.

All user-facing frequencies are ordinary frequencies in Hz.  Builders return
operators in angular units (rad/s, hbar = 1); ``TWO_PI`` is applied in one
place per builder.  Mode labels used throughout:

* lab frame: ``a1``, ``a2``, ``a3``, ``b``
* supermodes: ``a+``, ``a0``, ``a-``, ``b``
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, LayoutError, RegimeWarning
from .hilbert import (
    MECHANICAL,
    OPTICAL,
    ModeLayout,
    OperatorMatrix,
    annihilation,
    identity,
    number,
)

TWO_PI = 2.0 * math.pi

LAB_MODES = ("a1", "a2", "a3", "b")
SUPER_MODES = ("a+", "a0", "a-", "b")
REDUCED_MODES = ("a+", "a-", "b")


@dataclass(frozen=True)
class SystemParams:
    """Physical inputs, frequencies in Hz.

    ``n_th`` and ``temperature`` are alternatives; when only the temperature
    is given the thermal occupation follows from Bose-Einstein statistics at
    ``omega_m``.
    """

    omega1: float
    omega2: float
    mu: float
    g0: float
    omega_m: float
    omega3: float | None = None
    kappa: float = 0.0
    gamma: float = 0.0
    n_th: float | None = None
    temperature: float | None = None
    alpha: complex = 3.0
    n_photons: int = 1
    allow_omega3_mismatch: bool = False

    def __post_init__(self):
        if self.omega3 is None:
            object.__setattr__(self, "omega3", self.omega1)
        if self.omega3 != self.omega1 and not self.allow_omega3_mismatch:
            raise ConfigurationError(
                f"omega3 ({self.omega3}) must equal omega1 ({self.omega1}); set allow_omega3_mismatch to override"
            )
        for name in ("mu", "g0", "omega_m", "kappa", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.n_th is not None and self.n_th < 0:
            raise ConfigurationError("n_th must be non-negative")
        if self.temperature is not None and self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if int(self.n_photons) != self.n_photons or self.n_photons < 0:
            raise ConfigurationError("n_photons must be a non-negative integer")

    @classmethod
    def at_two_phonon_resonance(
        cls,
        g0: float,
        delta: float,
        omega_m: float,
        offset_in_g: float = -1.0,
        omega1: float = 193.4e12,
        **kw,
    ) -> "SystemParams":
        """Choose omega2 and mu so that omega+ - omega- - 2 omega_m = offset_in_g * g.

        ``g`` is the two-phonon coupling g0**2 / (8 delta).
        """
        g = effective_coupling(g0, delta)
        splitting = 2.0 * omega_m + offset_in_g * g
        if splitting <= 2 * abs(delta):
            raise ConfigurationError("requested supermode splitting is smaller than |omega1 - omega2|")
        mu = math.sqrt((splitting**2 - 4.0 * delta**2) / 8.0)
        return cls(omega1=omega1, omega2=omega1 - 2.0 * delta, mu=mu, g0=g0, omega_m=omega_m, **kw)

    @property
    def delta(self) -> float:
        return (self.omega1 - self.omega2) / 2.0

    def thermal_occupation(self) -> float:
        if self.n_th is not None:
            return float(self.n_th)
        if self.temperature is not None:
            from .dynamics import thermal_occupation

            return thermal_occupation(self.omega_m, self.temperature)
        return 0.0

    def regime_violations(self, delta_over_g0: float = 5.0, omega_m_over_delta: float = 100.0) -> list[str]:
        """Inequalities of the reduced-model regime that do not hold."""
        out = []
        d = abs(self.delta)
        if d < delta_over_g0 * self.g0:
            out.append(f"|delta| >= {delta_over_g0:g}*g0 violated: |delta|={d:.6g} Hz, g0={self.g0:.6g} Hz")
        if self.omega_m < omega_m_over_delta * d:
            out.append(
                f"omega_m >= {omega_m_over_delta:g}*|delta| violated: omega_m={self.omega_m:.6g} Hz, |delta|={d:.6g} Hz"
            )
        return out

    def check_regime(self, **kw) -> list[str]:
        bad = self.regime_violations(**kw)
        for msg in bad:
            warnings.warn(msg, RegimeWarning, stacklevel=2)
        return bad

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class SupermodeData:
    """Supermode transformation and the detunings of the RWA Hamiltonian (Hz)."""

    M: np.ndarray
    omega_plus: float
    omega_zero: float
    omega_minus: float
    Delta: float
    delta1: float
    delta2: float
    g1: float
    g2: float
    delta: float
    omega_m: float
    g0: float

    @property
    def two_phonon_detuning(self) -> float:
        """omega+ - omega- - 2 omega_m, computed without cancellation."""
        return self.Delta - 2.0 * self.omega_m

    def loss_weights(self) -> tuple[float, float]:
        """|<a+|a1>|^2 and |<a-|a1>|^2: share of a1 carried by a+ and a-."""
        return float(self.M[0, 0] ** 2), float(self.M[2, 0] ** 2)


def supermode_transform(params: SystemParams) -> SupermodeData:
    w1, w2, mu = params.omega1, params.omega2, params.mu
    if mu <= 0:
        raise ConfigurationError("mu = 0 leaves the supermode transformation degenerate")
    d12 = w1 - w2
    Delta = math.sqrt(8.0 * mu * mu + d12 * d12)
    xp = math.sqrt(2.0) * mu / math.sqrt(Delta * (Delta - d12))
    xm = math.sqrt(2.0) * mu / math.sqrt(Delta * (Delta + d12))
    s = 1.0 / math.sqrt(2.0)
    M = np.array(
        [
            [xp, s * math.sqrt(1.0 - d12 / Delta), xp],
            [-s, 0.0, s],
            [xm, -s * math.sqrt(1.0 + d12 / Delta), xm],
        ]
    )
    M.setflags(write=False)
    omega_plus = 0.5 * (w1 + w2 + Delta)
    omega_minus = 0.5 * (w1 + w2 - Delta)
    # differences are formed before adding the optical carrier to avoid cancellation
    delta1 = 0.5 * (Delta - d12) - params.omega_m
    delta2 = 0.5 * (Delta + d12) - params.omega_m
    # a1 = sum_k M[k, 0] a_k, so -g0 a1^+ a1 contributes -g0 M[k,0] M[l,0] a_k^+ a_l
    g1 = -params.g0 * M[1, 0] * M[0, 0]
    g2 = -params.g0 * M[2, 0] * M[1, 0]
    sm = SupermodeData(
        M=M,
        omega_plus=omega_plus,
        omega_zero=w1,
        omega_minus=omega_minus,
        Delta=Delta,
        delta1=delta1,
        delta2=delta2,
        g1=g1,
        g2=g2,
        delta=params.delta,
        omega_m=params.omega_m,
        g0=params.g0,
    )
    if not params.regime_violations():
        ref = params.g0 / (2.0 * math.sqrt(2.0))
        if ref > 0 and (abs(g1 - ref) > 0.05 * ref or abs(g2 - ref) > 0.05 * ref):
            raise ConfigurationError(f"g1={g1:.6g}, g2={g2:.6g} differ from g0/(2*sqrt 2)={ref:.6g} by more than 5%")
        d = params.delta
        if d != 0 and (abs(delta2 - d) > 0.1 * abs(d) or abs(delta1 + d) > 0.1 * abs(d)):
            warnings.warn(
                f"delta2 ~ -delta1 ~ delta fails by more than 10%: delta1={delta1:.6g}, delta2={delta2:.6g}, delta={d:.6g}",
                RegimeWarning,
                stacklevel=2,
            )
    return sm


def optical_coupling_matrix(params: SystemParams) -> np.ndarray:
    """3x3 single-photon block of the lab-frame optical Hamiltonian (Hz)."""
    return np.array(
        [
            [params.omega1, params.mu, 0.0],
            [params.mu, params.omega2, params.mu],
            [0.0, params.mu, params.omega3],
        ]
    )


def _require_modes(layout: ModeLayout, expected: tuple[str, ...]):
    if set(layout.labels) != set(expected) or len(layout.labels) != len(expected):
        raise LayoutError(f"layout must have exactly the modes {expected}, got {layout.labels}")


def build_full_hamiltonian(params: SystemParams, layout: ModeLayout) -> OperatorMatrix:
    """Lab-frame Hamiltonian of the three coupled cavities and the membrane (rad/s)."""
    _require_modes(layout, LAB_MODES)
    a1, a2, a3 = (annihilation(layout, m) for m in ("a1", "a2", "a3"))
    b = annihilation(layout, "b")
    n1 = a1.dagger() @ a1
    H = (
        params.omega1 * n1
        + params.omega2 * (a2.dagger() @ a2)
        + params.omega3 * (a3.dagger() @ a3)
        + params.mu * (a1.dagger() @ a2 + a2.dagger() @ a1)
        + params.mu * (a2.dagger() @ a3 + a3.dagger() @ a2)
        + params.omega_m * (b.dagger() @ b)
        - params.g0 * (n1 @ (b + b.dagger()))
    )
    return TWO_PI * H


@dataclass(frozen=True)
class HamiltonianTerm:
    """One term ``amplitude * exp(i 2 pi frequency t) * operator`` (its h.c. is implied).

    ``amplitude`` is in rad/s; ``frequency`` is in Hz.
    """

    operator: OperatorMatrix
    amplitude: complex
    frequency: float
    label: str = ""


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """H(t) = sum_k amp_k exp(i 2 pi f_k t) Op_k + h.c."""

    layout: ModeLayout
    terms: tuple[HamiltonianTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for t in self.terms:
            if t.operator.layout != self.layout:
                raise LayoutError(f"term {t.label!r} lives on another layout")

    def at(self, t: float) -> OperatorMatrix:
        out = None
        for term in self.terms:
            x = term.amplitude * np.exp(1j * TWO_PI * term.frequency * t) * term.operator
            x = x + x.dagger()
            out = x if out is None else out + x
        if out is None:
            return 0.0 * identity(self.layout)
        return out

    @property
    def max_frequency(self) -> float:
        return max((abs(t.frequency) for t in self.terms), default=0.0)

    def is_static(self) -> bool:
        return self.max_frequency == 0.0

    def __add__(self, other: "TimeDependentHamiltonian") -> "TimeDependentHamiltonian":
        if self.layout != other.layout:
            raise LayoutError("cannot add Hamiltonians on different layouts")
        return TimeDependentHamiltonian(self.layout, self.terms + other.terms)


def static_term(op: OperatorMatrix, energy: float, label: str = "") -> HamiltonianTerm:
    """Term for a Hermitian ``energy * op`` (half goes into the implied h.c.)."""
    return HamiltonianTerm(op, 0.5 * energy, 0.0, label)


def supermode_layout(n_photons: int, mech_dim: int, optical_dim: int | None = None, with_zero: bool = True) -> ModeLayout:
    d = optical_dim if optical_dim is not None else n_photons + 2
    labels = SUPER_MODES if with_zero else REDUCED_MODES
    return ModeLayout.of(*[(m, mech_dim, MECHANICAL) if m == "b" else (m, d, OPTICAL) for m in labels])


def lab_layout(n_photons: int, mech_dim: int, optical_dim: int | None = None) -> ModeLayout:
    d = optical_dim if optical_dim is not None else n_photons + 2
    return ModeLayout.of(("a1", d), ("a2", d), ("a3", d), ("b", mech_dim, MECHANICAL))


def build_rwa_hamiltonian(sm: SupermodeData, layout: ModeLayout) -> TimeDependentHamiltonian:
    """Interaction-picture single-phonon exchange a+ <-> a0 <-> a- with detunings delta1, delta2."""
    _require_modes(layout, SUPER_MODES)
    ap, a0, am, b = (annihilation(layout, m) for m in SUPER_MODES)
    bd = b.dagger()
    return TimeDependentHamiltonian(
        layout,
        (
            HamiltonianTerm(ap @ a0.dagger() @ bd, TWO_PI * sm.g1, -sm.delta1, "g1 a+ a0^ b^"),
            HamiltonianTerm(a0 @ am.dagger() @ bd, TWO_PI * sm.g2, -sm.delta2, "g2 a0 a-^ b^"),
        ),
    )


def counter_rotating_terms(sm: SupermodeData, layout: ModeLayout) -> TimeDependentHamiltonian:
    """Interaction-picture terms of -g0 a1^+ a1 (b + b^+) dropped by the RWA.

    Together with ``build_rwa_hamiltonian`` these reproduce the full
    optomechanical interaction after conjugation by M.
    """
    _require_modes(layout, SUPER_MODES)
    ops = [annihilation(layout, m) for m in ("a+", "a0", "a-")]
    w = [sm.omega_plus, sm.omega_zero, sm.omega_minus]
    b = annihilation(layout, "b")
    bd = b.dagger()
    kept = {(1, 0), (2, 1)}  # (k, l) with a_k^+ a_l b^+ retained by the RWA
    terms = []
    col = sm.M[:, 0]
    for k in range(3):
        for l in range(3):
            c = -sm.g0 * col[k] * col[l]
            if c == 0.0:
                continue
            # only the b^+ half is listed; the b half comes from the implied h.c. of (k <-> l)
            if (k, l) in kept:
                continue
            # frequency of a_k^+ a_l b^+ in the interaction picture; optical carriers cancel to differences
            fo = _diff(w, k, l, sm)
            terms.append(HamiltonianTerm(ops[k].dagger() @ ops[l] @ bd, TWO_PI * c, fo + sm.omega_m, f"a{k}^ a{l} b^"))
    return TimeDependentHamiltonian(layout, tuple(terms))


def _diff(w, k, l, sm: SupermodeData) -> float:
    # omega_k - omega_l from Delta and omega1 - omega2 rather than from the large carriers
    d12 = 2.0 * sm.delta
    rel = [0.5 * (sm.Delta - d12), 0.0, -0.5 * (sm.Delta + d12)]  # relative to omega0
    return rel[k] - rel[l]


def conjugated_interaction(sm: SupermodeData, layout: ModeLayout) -> OperatorMatrix:
    """-g0 a1^+ a1 (b + b^+) expressed in supermodes (Schroedinger picture, rad/s)."""
    _require_modes(layout, SUPER_MODES)
    col = sm.M[:, 0]
    a1 = sum((col[k] * annihilation(layout, m) for k, m in enumerate(("a+", "a0", "a-"))), start=0 * identity(layout))
    b = annihilation(layout, "b")
    return TWO_PI * (-sm.g0) * (a1.dagger() @ a1 @ (b + b.dagger()))


def effective_coupling(g0: float, delta: float) -> float:
    """Two-phonon coupling g0**2 / (8 delta), sign included (Hz)."""
    if delta == 0:
        raise ZeroDivisionError("delta = 0: the two-phonon coupling diverges")
    return g0 * g0 / (8.0 * delta)


@dataclass(frozen=True)
class EffectiveModel:
    """Two-phonon model with a0 eliminated.  ``g`` and the detuning in Hz."""

    g: float
    two_phonon_detuning: float
    include_kerr: bool = True

    @classmethod
    def from_params(cls, params: SystemParams, include_kerr: bool = True) -> "EffectiveModel":
        sm = supermode_transform(params)
        return cls(effective_coupling(params.g0, params.delta), sm.two_phonon_detuning, include_kerr)


def build_effective_hamiltonian(eff: EffectiveModel, layout: ModeLayout) -> TimeDependentHamiltonian:
    """Two-phonon exchange a+ -> a- + 2 phonons, optionally with its Kerr shifts."""
    _require_modes(layout, REDUCED_MODES)
    ap, am, b = (annihilation(layout, m) for m in REDUCED_MODES)
    bd = b.dagger()
    g = TWO_PI * eff.g
    terms = [HamiltonianTerm(ap @ am.dagger() @ bd @ bd, -g, -eff.two_phonon_detuning, "-g a+ a-^ b^2")]
    if eff.include_kerr:
        np_, nm, nb = ap.dagger() @ ap, am.dagger() @ am, bd @ b
        kerr = np_ + np_ @ nb + nm @ nb
        terms.append(static_term(kerr, -g, "kerr"))
    return TimeDependentHamiltonian(layout, tuple(terms))


def build_two_phonon_hamiltonian(g: float, layout: ModeLayout) -> OperatorMatrix:
    """Pure two-phonon interaction -g (a+^ a- b^2 + h.c.) in rad/s."""
    _require_modes(layout, REDUCED_MODES)
    ap, am, b = (annihilation(layout, m) for m in REDUCED_MODES)
    x = ap.dagger() @ am @ b @ b
    return TWO_PI * (-g) * (x + x.dagger())


def optical_number(layout: ModeLayout) -> OperatorMatrix:
    """Total photon number over every optical mode of the layout."""
    out = 0 * identity(layout)
    for m in layout.modes:
        if m.role == OPTICAL:
            out = out + number(layout, m.label)
    return out
