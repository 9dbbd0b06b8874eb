"""Validated state/Hamiltonian types and the spectral primitives built on them.

Units: hbar = 1.  States are stored as full complex matrices; Hamiltonians are
stored in spectral form (ascending energies plus eigenbasis) since every
consumer needs that form anyway.
"""

from dataclasses import dataclass

import numpy as np

from .validation import (
    UNITARY_TOL,
    DimensionMismatchError,
    ValidationError,
    check_density_matrix,
    check_hermitian,
)


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A density matrix: Hermitian, unit trace, positive semidefinite."""

    matrix: np.ndarray

    def __post_init__(self):
        m = check_density_matrix(self.matrix)
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self):
        return self.matrix.shape[0]

    @classmethod
    def from_ket(cls, psi):
        psi = np.asarray(psi, dtype=complex).ravel()
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise ValidationError("cannot build a state from the zero vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_populations(cls, p, basis=None):
        """Diagonal state ``sum_n p_n |b_n><b_n|`` in ``basis`` (default: computational)."""
        p = np.asarray(p, dtype=float)
        m = np.diag(p).astype(complex)
        if basis is not None:
            basis = np.asarray(basis, dtype=complex)
            m = basis @ m @ basis.conj().T
        return cls(m)

    @classmethod
    def maximally_mixed(cls, d):
        return cls(np.eye(d, dtype=complex) / d)

    def expect(self, op):
        return float(np.real(np.trace(np.asarray(op) @ self.matrix)))


@dataclass(frozen=True, eq=False)
class BatteryHamiltonian:
    """Battery Hamiltonian in spectral form.

    ``energies`` are ascending; column ``n`` of ``basis`` is the eigenvector
    for ``energies[n]``.
    """

    energies: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        u = np.asarray(self.basis, dtype=complex)
        if e.ndim != 1 or e.size == 0:
            raise ValidationError("energies must be a non-empty vector")
        if u.shape != (e.size, e.size):
            raise DimensionMismatchError(f"basis shape {u.shape} does not match {e.size} energies")
        if np.any(np.diff(e) < 0):
            raise ValidationError("energies must be sorted ascending")
        res = np.max(np.abs(u.conj().T @ u - np.eye(e.size)))
        if res > UNITARY_TOL * max(1, e.size):
            raise ValidationError(f"basis is not unitary (residual {res:.3e})")
        object.__setattr__(self, "energies", _frozen(e))
        object.__setattr__(self, "basis", _frozen(u))

    @property
    def dim(self):
        return self.energies.size

    @property
    def matrix(self):
        u = self.basis
        return (u * self.energies) @ u.conj().T

    @property
    def ground_energy(self):
        return float(self.energies[0])

    @classmethod
    def from_matrix(cls, h):
        energies, basis = eig_hermitian(h)
        return cls(energies, basis)

    @classmethod
    def from_energies(cls, energies):
        e = np.asarray(energies, dtype=float)
        order = np.argsort(e, kind="stable")
        return cls(e[order], np.eye(e.size, dtype=complex)[:, order])

    @classmethod
    def equally_spaced(cls, d, low=-1.0, high=1.0):
        """Diagonal Hamiltonian with ``d`` equally spaced levels on ``[low, high]``."""
        if d < 2:
            raise ValidationError("equally spaced spectrum needs d >= 2")
        return cls.from_energies(np.linspace(low, high, d))

    def normalized(self):
        """Affinely rescale the spectrum onto ``[-1, 1]`` (eigenbasis unchanged)."""
        return BatteryHamiltonian(normalize_energies(self.energies), self.basis)

    def ground_state(self):
        return QuantumState.from_ket(self.basis[:, 0])


def normalize_energies(energies):
    """Map ``e -> (2 e - (e_max + e_min)) / (e_max - e_min)``; spectrum lands on [-1, 1]."""
    e = np.asarray(energies, dtype=float)
    lo, hi = e.min(), e.max()
    if not hi > lo:
        raise ValidationError("cannot normalize a fully degenerate spectrum")
    out = (2.0 * e - (hi + lo)) / (hi - lo)
    # pin the endpoints so the span is exactly [-1, 1]
    out[e == lo] = -1.0
    out[e == hi] = 1.0
    return out


def eig_hermitian(m):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises ``ValidationError`` when ``m`` is not Hermitian to within 1e-12
    (relative to its largest entry).
    """
    m = check_hermitian(m, relative=True)
    lam, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return lam, v


def _as_matrix(rho):
    return rho.matrix if isinstance(rho, QuantumState) else np.asarray(rho, dtype=complex)


def _check_dims(rho, h):
    if rho.shape[0] != h.dim:
        raise DimensionMismatchError(f"state dimension {rho.shape[0]} != Hamiltonian dimension {h.dim}")


def spectrum(rho):
    """Eigenvalues of ``rho`` sorted descending."""
    return np.linalg.eigvalsh(_as_matrix(rho))[::-1]


def dephase(rho, h):
    """Populations ``p_n = <e_n|rho|e_n>`` in the eigenbasis of ``h``."""
    m = _as_matrix(rho)
    _check_dims(m, h)
    u = h.basis
    p = np.einsum("in,ij,jn->n", u.conj(), m, u).real
    return p


def passive_state(rho, h):
    """Passive state: descending eigenvalues of ``rho`` placed on ascending levels of ``h``.

    Ties are broken by a stable sort so the result is deterministic.
    """
    m = _as_matrix(rho)
    _check_dims(m, h)
    lam = np.linalg.eigvalsh(m)
    r = lam[np.argsort(-lam, kind="stable")]
    u = h.basis
    return QuantumState((u * r) @ u.conj().T)


def partial_trace(rho, keep, dims):
    """Reduced state of a bipartite ``rho`` on ``A (x) B``.

    ``keep`` selects the surviving factor: ``0``/``"A"`` or ``1``/``"B"``.
    """
    m = _as_matrix(rho)
    d_a, d_b = (int(x) for x in dims)
    if m.shape != (d_a * d_b, d_a * d_b):
        raise DimensionMismatchError(f"state of shape {m.shape} is not {d_a}x{d_b} bipartite")
    t = m.reshape(d_a, d_b, d_a, d_b)
    if keep in (0, "A", "a"):
        red = np.einsum("ijkj->ik", t)
    elif keep in (1, "B", "b"):
        red = np.einsum("ijil->jl", t)
    else:
        raise ValidationError(f"unknown subsystem selector {keep!r}")
    return QuantumState(0.5 * (red + red.conj().T))


def unitary_propagator(h, t):
    """``exp(-i h t)`` from the spectral decomposition of ``h``."""
    lam, v = eig_hermitian(h)
    return (v * np.exp(-1j * lam * t)) @ v.conj().T


def evolve_unitary(rho, h, t):
    """``rho(t) = exp(-iHt) rho exp(iHt)`` for a time-independent generator."""
    m = _as_matrix(rho)
    u = unitary_propagator(h, t)
    if u.shape != m.shape:
        raise DimensionMismatchError("generator and state dimensions differ")
    out = u @ m @ u.conj().T
    return QuantumState(0.5 * (out + out.conj().T))
