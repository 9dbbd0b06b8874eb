"""Input validation helpers, in the spirit of ``sklearn.utils.check_array``."""

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
POPULATION_TOL = 1e-12
UNITARY_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a state/operator invariant."""


class DimensionMismatchError(ValidationError):
    pass


def hermiticity_residual(m):
    m = np.asarray(m)
    return float(np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))), initial=0.0))


def check_square(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    return m


def check_hermitian(m, tol=HERMITIAN_TOL, name="matrix", relative=False):
    """Return ``m`` as a complex array after checking it is Hermitian.

    With ``relative=True`` the tolerance is scaled by ``max(1, max|m|)``,
    which is what operator-valued inputs (Hamiltonians with large entries)
    need.
    """
    m = check_square(np.asarray(m, dtype=complex), name)
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(m)))) if relative else 1.0
    res = hermiticity_residual(m)
    if res > tol * scale:
        raise ValidationError(f"{name} is not Hermitian (residual {res:.3e})")
    return m


def check_density_matrix(m, name="state"):
    m = check_hermitian(m, HERMITIAN_TOL, name)
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValidationError(f"{name} does not have unit trace (trace {tr!r})")
    lam_min = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
    if lam_min < -PSD_TOL:
        raise ValidationError(f"{name} is not positive semidefinite (min eigenvalue {lam_min:.3e})")
    return m


def check_populations(p, name="populations"):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{name} contains non-finite entries")
    if p.min() < -POPULATION_TOL:
        raise ValidationError(f"{name} has a negative entry {p.min():.3e}")
    if abs(p.sum() - 1.0) > POPULATION_TOL:
        raise ValidationError(f"{name} does not sum to one (sum {p.sum()!r})")
    return p


def check_states(X, dim=None):
    """Validate a stack of density matrices of shape ``(n, d, d)``.

    A single ``(d, d)`` matrix is promoted to a stack of one.  Checks are
    vectorised so that large sample batches stay cheap.
    """
    X = np.asarray(X, dtype=complex)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2] or X.shape[1] == 0:
        raise ValidationError(f"expected states of shape (n, d, d), got {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatchError(f"states have dimension {X.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("states contain non-finite entries")
    herm = np.max(np.abs(X - np.conj(np.swapaxes(X, 1, 2))), axis=(1, 2))
    bad = np.flatnonzero(herm > HERMITIAN_TOL)
    if bad.size:
        raise ValidationError(f"state {bad[0]} is not Hermitian (residual {herm[bad[0]]:.3e})")
    tr = np.einsum("nii->n", X).real
    bad = np.flatnonzero(np.abs(tr - 1.0) > TRACE_TOL)
    if bad.size:
        raise ValidationError(f"state {bad[0]} does not have unit trace (trace {tr[bad[0]]!r})")
    lam = np.linalg.eigvalsh(X)[:, 0]
    bad = np.flatnonzero(lam < -PSD_TOL)
    if bad.size:
        raise ValidationError(f"state {bad[0]} is not positive semidefinite (min eigenvalue {lam[bad[0]]:.3e})")
    return X
