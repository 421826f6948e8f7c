"""Truncated Fock spaces for a handful of bosonic modes.

Operators are kept as ``scipy.sparse`` CSR matrices: ladder operators on a
tensor product are extremely sparse and the n = 5 cat layouts exceed two
thousand basis states.  ``OperatorMatrix.dense()`` gives the full array when
a caller needs it.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import ConfigurationError, ShapeError, TruncationError

OPTICAL = "optical"
MECHANICAL = "mechanical"


@dataclass(frozen=True)
class Mode:
    label: str
    dim: int
    role: str = OPTICAL

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ConfigurationError(f"mode {self.label!r}: dim must be an integer >= 2, got {self.dim}")
        if self.role not in (OPTICAL, MECHANICAL):
            raise ConfigurationError(f"mode {self.label!r}: unknown role {self.role!r}")


@dataclass(frozen=True)
class ModeLayout:
    """Ordered set of modes; basis index is row-major over ``modes``."""

    modes: tuple[Mode, ...]

    def __post_init__(self):
        if not self.modes:
            raise ConfigurationError("layout needs at least one mode")
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"duplicate mode labels in {labels}")

    @classmethod
    def of(cls, *specs) -> "ModeLayout":
        """Build from ``(label, dim)`` or ``(label, dim, role)`` tuples."""
        return cls(tuple(s if isinstance(s, Mode) else Mode(*s) for s in specs))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.dim for m in self.modes)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def position(self, label: str) -> int:
        for i, m in enumerate(self.modes):
            if m.label == label:
                return i
        raise ConfigurationError(f"unknown mode {label!r}; layout has {self.labels}")

    def mode(self, label: str) -> Mode:
        return self.modes[self.position(label)]

    def index(self, occupations: Sequence[int]) -> int:
        if len(occupations) != len(self.modes):
            raise ShapeError(f"expected {len(self.modes)} occupations, got {len(occupations)}")
        for n, m in zip(occupations, self.modes):
            if not 0 <= n < m.dim:
                raise TruncationError(
                    f"occupation {n} does not fit mode {m.label!r} of dim {m.dim}", required_dim=n + 1
                )
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def occupations(self, index: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(index, self.dims))

    def occupation_table(self) -> np.ndarray:
        """Array of shape (total_dim, n_modes) with the occupation of every basis state."""
        grids = np.indices(self.dims).reshape(len(self.modes), -1)
        return grids.T.copy()

    def sub(self, labels: Iterable[str]) -> "ModeLayout":
        keep = set(labels)
        return ModeLayout(tuple(m for m in self.modes if m.label in keep))


def _check_same(a: ModeLayout, b: ModeLayout):
    if a != b:
        raise ShapeError(f"layout mismatch: {a.labels}{a.dims} vs {b.labels}{b.dims}")


class OperatorMatrix:
    """Linear operator on a ``ModeLayout``.

    Supports ``+``, ``-``, ``@`` (composition) and scalar ``*``.  Instances are
    treated as immutable.
    """

    __slots__ = ("layout", "_m")

    def __init__(self, layout: ModeLayout, entries):
        m = sp.csr_matrix(entries, dtype=complex)
        n = layout.total_dim
        if m.shape != (n, n):
            raise ShapeError(f"operator shape {m.shape} does not match layout dimension {n}")
        m.eliminate_zeros()
        self.layout = layout
        self._m = m

    @property
    def sparse(self) -> sp.csr_matrix:
        return self._m

    def dense(self) -> np.ndarray:
        return self._m.toarray()

    def __getitem__(self, ij):
        return complex(self._m[ij])

    @property
    def shape(self):
        return self._m.shape

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self._m.conj().T)

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        diff = self._m - self._m.conj().T
        return diff.nnz == 0 or float(abs(diff).max()) <= atol

    def max_abs(self) -> float:
        return float(abs(self._m).max()) if self._m.nnz else 0.0

    def __add__(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        _check_same(self.layout, other.layout)
        return OperatorMatrix(self.layout, self._m + other._m)

    def __sub__(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        _check_same(self.layout, other.layout)
        return OperatorMatrix(self.layout, self._m - other._m)

    def __neg__(self):
        return OperatorMatrix(self.layout, -self._m)

    def __mul__(self, c):
        if isinstance(c, OperatorMatrix):
            return NotImplemented
        return OperatorMatrix(self.layout, self._m * complex(c))

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_same(self.layout, other.layout)
            return OperatorMatrix(self.layout, self._m @ other._m)
        if isinstance(other, PureState):
            _check_same(self.layout, other.layout)
            return self._m @ other.amplitudes
        return NotImplemented

    def expect(self, state) -> complex:
        if isinstance(state, PureState):
            _check_same(self.layout, state.layout)
            return complex(np.vdot(state.amplitudes, self._m @ state.amplitudes))
        _check_same(self.layout, state.layout)
        return complex(np.sum(self._m.multiply(state.rho.T)))

    def __repr__(self):
        return f"OperatorMatrix({self.layout.labels}, dims={self.layout.dims}, nnz={self._m.nnz})"


def _embed(layout: ModeLayout, label: str, local) -> OperatorMatrix:
    pos = layout.position(label)
    factors = [sp.identity(m.dim, dtype=complex, format="csr") for m in layout.modes]
    factors[pos] = sp.csr_matrix(local, dtype=complex)
    return OperatorMatrix(layout, reduce(lambda x, y: sp.kron(x, y, format="csr"), factors))


def annihilation(layout: ModeLayout, mode: str) -> OperatorMatrix:
    d = layout.mode(mode).dim
    return _embed(layout, mode, sp.diags(np.sqrt(np.arange(1, d)), 1))


def creation(layout: ModeLayout, mode: str) -> OperatorMatrix:
    return annihilation(layout, mode).dagger()


def number(layout: ModeLayout, mode: str) -> OperatorMatrix:
    a = annihilation(layout, mode)
    return a.dagger() @ a


def identity(layout: ModeLayout) -> OperatorMatrix:
    return OperatorMatrix(layout, sp.identity(layout.total_dim, dtype=complex, format="csr"))


def dagger(op: OperatorMatrix) -> OperatorMatrix:
    return op.dagger()


def compose(*ops: OperatorMatrix) -> OperatorMatrix:
    return reduce(lambda x, y: x @ y, ops)


def add(*ops: OperatorMatrix) -> OperatorMatrix:
    return reduce(lambda x, y: x + y, ops)


def scale(op: OperatorMatrix, c: complex) -> OperatorMatrix:
    return op * c


def commutator(x: OperatorMatrix, y: OperatorMatrix) -> OperatorMatrix:
    return x @ y - y @ x


class PureState:
    """Normalised state vector on a layout."""

    __slots__ = ("layout", "amplitudes")

    def __init__(self, layout: ModeLayout, amplitudes, normalize: bool = True):
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if v.size != layout.total_dim:
            raise ShapeError(f"state of size {v.size} does not match layout dimension {layout.total_dim}")
        if normalize:
            nrm = np.linalg.norm(v)
            if nrm == 0:
                raise ValueError("cannot normalise the zero vector")
            v = v / nrm
        v.setflags(write=False)
        self.layout = layout
        self.amplitudes = v

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def overlap(self, other: "PureState") -> complex:
        _check_same(self.layout, other.layout)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_mixed(self) -> "MixedState":
        v = self.amplitudes
        return MixedState(self.layout, np.outer(v, v.conj()), check=False)

    def __repr__(self):
        return f"PureState({self.layout.labels}, dims={self.layout.dims})"


class MixedState:
    """Density matrix on a layout."""

    __slots__ = ("layout", "rho")

    def __init__(self, layout: ModeLayout, rho, check: bool = True, normalize: bool = False):
        r = np.asarray(rho, dtype=complex)
        n = layout.total_dim
        if r.shape != (n, n):
            raise ShapeError(f"density matrix shape {r.shape} does not match layout dimension {n}")
        if normalize:
            tr = np.trace(r).real
            if tr <= 0:
                raise ValueError("density matrix has non-positive trace")
            r = r / tr
        if check:
            if abs(np.trace(r) - 1) > 1e-8:
                raise ValueError(f"trace {np.trace(r).real:.3e} != 1")
            if np.max(np.abs(r - r.conj().T), initial=0.0) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            if np.linalg.eigvalsh(r).min() < -1e-8:
                raise ValueError("density matrix is not positive semidefinite")
        r.setflags(write=False)
        self.layout = layout
        self.rho = r

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho, self.rho)))

    def __repr__(self):
        return f"MixedState({self.layout.labels}, dims={self.layout.dims})"


def as_mixed(state) -> MixedState:
    return state.to_mixed() if isinstance(state, PureState) else state


def fock_state(layout: ModeLayout, occupations: Sequence[int]) -> PureState:
    v = np.zeros(layout.total_dim, dtype=complex)
    v[layout.index(occupations)] = 1.0
    return PureState(layout, v, normalize=False)


def coherent_tail(alpha: complex, dim: int) -> float:
    """Probability weight of |alpha> on Fock levels >= dim."""
    return float(poisson.sf(dim - 1, abs(alpha) ** 2))


def required_dim(alpha: complex, tail_tol: float = 1e-8) -> int:
    d = 2
    while coherent_tail(alpha, d) >= tail_tol:
        d += 1
    return d


def coherent_amplitudes(alpha: complex, dim: int, tail_tol: float | None = 1e-8) -> np.ndarray:
    """Fock amplitudes of |alpha>, renormalised on ``dim`` levels."""
    if tail_tol is not None:
        tail = coherent_tail(alpha, dim)
        if tail >= tail_tol:
            need = required_dim(alpha, tail_tol)
            raise TruncationError(
                f"|alpha={alpha}> leaves weight {tail:.3e} above level {dim} (tolerance {tail_tol:g}); "
                f"need dim >= {need}",
                required_dim=need,
            )
    n = np.arange(dim)
    if alpha == 0:
        c = (n == 0).astype(complex)
    else:
        r, th = abs(alpha), np.angle(alpha)
        c = np.exp(-r * r / 2 + n * np.log(r) - 0.5 * gammaln(n + 1)) * np.exp(1j * th * n)
    return c / np.linalg.norm(c)


def product_state(layout: ModeLayout, factors: dict) -> PureState:
    """Tensor product of per-mode vectors; modes not named are in vacuum.

    A scalar factor is a Fock occupation; pass amplitudes for anything else.
    """
    vecs = []
    for m in layout.modes:
        v = factors.get(m.label)
        if v is None:
            v = np.zeros(m.dim, dtype=complex)
            v[0] = 1.0
        elif np.isscalar(v):
            if int(v) != v:
                raise ConfigurationError(f"occupation for {m.label!r} must be an integer, got {v!r}")
            k = int(v)
            if not 0 <= k < m.dim:
                raise TruncationError(f"occupation {k} does not fit mode {m.label!r}", required_dim=k + 1)
            v = np.zeros(m.dim, dtype=complex)
            v[k] = 1.0
        v = np.asarray(v, dtype=complex)
        if v.size != m.dim:
            raise ShapeError(f"factor for {m.label!r} has size {v.size}, mode dim is {m.dim}")
        vecs.append(v)
    return PureState(layout, reduce(np.kron, vecs))


def coherent_state(layout: ModeLayout, mode: str, alpha: complex, tail_tol: float = 1e-8) -> PureState:
    d = layout.mode(mode).dim
    return product_state(layout, {mode: coherent_amplitudes(alpha, d, tail_tol)})


def partial_trace(state, keep: Iterable[str]) -> MixedState:
    """Reduced density matrix on the modes in ``keep`` (layout order preserved)."""
    layout = state.layout
    keep = list(keep)
    if not keep:
        raise ConfigurationError("partial_trace needs at least one mode to keep")
    pos = sorted(layout.position(k) for k in keep)
    drop = [i for i in range(len(layout.modes)) if i not in pos]
    dims = layout.dims
    sub = ModeLayout(tuple(layout.modes[i] for i in pos))
    dk = sub.total_dim
    if isinstance(state, PureState):
        psi = state.amplitudes.reshape(dims)
        psi = np.transpose(psi, pos + drop).reshape(dk, -1)
        rho = psi @ psi.conj().T
    else:
        n = len(dims)
        r = state.rho.reshape(dims + dims)
        r = np.transpose(r, pos + drop + [n + i for i in pos] + [n + i for i in drop])
        dd = int(np.prod([dims[i] for i in drop])) if drop else 1
        r = r.reshape(dk, dd, dk, dd)
        rho = np.einsum("ajbj->ab", r)
    return MixedState(sub, rho, check=False)


def sector_indices(layout: ModeLayout, modes: Sequence[str], max_total: int | None = None, total: int | None = None) -> np.ndarray:
    """Basis indices whose summed occupation over ``modes`` is <= max_total (or == total)."""
    occ = layout.occupation_table()
    s = occ[:, [layout.position(m) for m in modes]].sum(axis=1)
    if total is not None:
        mask = s == total
    elif max_total is not None:
        mask = s <= max_total
    else:
        raise ConfigurationError("give max_total or total")
    return np.flatnonzero(mask)
