"""Figures of merit for a battery state against its Hamiltonian.

Everything is evaluated in the eigenbasis of the battery Hamiltonian: the
populations ``p`` are the diagonal there, the spectrum ``r`` is sorted
descending, and the passive/dephased-passive energies follow by pairing sorted
vectors with the ascending energies.  Entropies are in nats.

Scalar functions take a ``QuantumState`` (or a bare matrix) and a
``BatteryHamiltonian``.  ``evaluate_batch`` computes the same quantities for a
stack of states at once and is what the experiments use.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import BatteryHamiltonian, QuantumState, _as_matrix, _check_dims, dephase, normalize_energies
from .validation import DimensionMismatchError, ValidationError, check_populations, check_states

ORDER_TOL = 1e-12
ENTROPY_FLOOR = 1e-15
ENERGY_TOL = 1e-12

__all__ = [
    "ErgotropyReport",
    "StageLabel",
    "charging_efficiency",
    "classify_stage",
    "coherence",
    "coherent_ergotropy",
    "diag_entropy",
    "ergotropy",
    "ergotropy_report",
    "evaluate_batch",
    "evaluate_pairs",
    "incoherent_ergotropy",
    "incoherent_ergotropy_from_populations",
    "locked_energy",
    "normalize_hamiltonian",
    "participation_ratio",
    "purity",
    "stage_labels",
    "stored_energy",
    "vn_entropy",
]


def normalize_hamiltonian(h):
    """``H -> [2H - (e_d + e_1) I] / (e_d - e_1)``; accepts a matrix or a BatteryHamiltonian."""
    if not isinstance(h, BatteryHamiltonian):
        h = BatteryHamiltonian.from_matrix(h)
    return BatteryHamiltonian(normalize_energies(h.energies), h.basis)


# ---------------------------------------------------------------------------
# entropies and simple functionals


def _shannon(p):
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    safe = np.where(p > ENTROPY_FLOOR, p, 1.0)
    return -np.sum(np.where(p > ENTROPY_FLOOR, p * np.log(safe), 0.0), axis=-1)


def diag_entropy(p):
    """Shannon entropy of a population vector (0 log 0 = 0)."""
    return float(_shannon(p))


def vn_entropy(rho):
    return float(_shannon(np.linalg.eigvalsh(_as_matrix(rho))))


def participation_ratio(p):
    p = np.asarray(p, dtype=float)
    return float(1.0 / np.sum(p**2))


def purity(rho):
    m = _as_matrix(rho)
    return float(np.sum(np.abs(m) ** 2))


# ---------------------------------------------------------------------------
# energies


def _sorted_desc(x):
    x = np.asarray(x)
    idx = np.argsort(-x, axis=-1, kind="stable")
    return np.take_along_axis(x, idx, axis=-1)


def _populations_and_spectrum(rho, h):
    m = _as_matrix(rho)
    _check_dims(m, h)
    p = dephase(m, h)
    r = _sorted_desc(np.linalg.eigvalsh(m))
    return p, r


def stored_energy(rho_t, rho_0, h):
    """``Tr[H rho_t] - Tr[H rho_0]``."""
    a, b = _as_matrix(rho_t), _as_matrix(rho_0)
    if a.shape != b.shape:
        raise DimensionMismatchError("rho_t and rho_0 have different dimensions")
    pa, pb = dephase(a, h), dephase(b, h)
    return float(np.dot(pa - pb, h.energies))


def ergotropy(rho, h):
    p, r = _populations_and_spectrum(rho, h)
    return float(np.dot(p - r, h.energies))


def incoherent_ergotropy_from_populations(p, energies):
    """Work extractable from the dephased state: ``sum (p_n - sorted(p)_n) e_n``.

    Written as a single difference so that an already non-increasing ``p``
    gives exactly zero.
    """
    p = np.asarray(p, dtype=float)
    return np.dot(p - _sorted_desc(p), np.asarray(energies, dtype=float))


def incoherent_ergotropy(rho, h):
    p = dephase(rho, h)
    return float(incoherent_ergotropy_from_populations(p, h.energies))


def coherent_ergotropy(rho, h):
    p, r = _populations_and_spectrum(rho, h)
    return float(np.dot(_sorted_desc(p) - r, h.energies))


def locked_energy(rho, h, rho_0=None):
    """Energy of the passive state above the reference ``rho_0`` (default: ground level)."""
    _, r = _populations_and_spectrum(rho, h)
    ref = h.ground_energy if rho_0 is None else float(np.dot(dephase(rho_0, h), h.energies))
    return float(np.dot(r, h.energies) - ref)


def charging_efficiency(rho_t, rho_0, h):
    """Ergotropy over stored energy; ``None`` when the stored energy vanishes."""
    e = stored_energy(rho_t, rho_0, h)
    if abs(e) <= ENERGY_TOL:
        return None
    return ergotropy(rho_t, h) / e


def coherence(rho, h):
    """Relative entropy of coherence in the energy eigenbasis, ``S_diag - S``."""
    p, r = _populations_and_spectrum(rho, h)
    return float(_shannon(_sorted_desc(p)) - _shannon(r))


# ---------------------------------------------------------------------------
# population-inversion stages


@dataclass(frozen=True)
class StageLabel:
    """Population-inversion stage.

    ``stage`` is ``"I"`` (no inversion), ``"II"`` (local) or ``"III"``
    (global).  ``region`` refines stage II for three levels
    (``"II_1"`` .. ``"II_4"``).  ``ordering`` lists 1-based level indices by
    descending population.
    """

    stage: str
    region: str | None = None
    ordering: tuple = field(default=(), compare=False)

    def __str__(self):
        return self.region or self.stage


def _stage_codes(p, tol=ORDER_TOL):
    p = np.asarray(p, dtype=float)
    n, d = p.shape
    diff = p[:, :, None] - p[:, None, :]  # diff[k, a, b] = p_a - p_b
    upper = np.triu(np.ones((d, d), dtype=bool), 1)
    no_inv = np.all(np.where(upper, diff >= -tol, True), axis=(1, 2))
    ascending = np.all(np.where(upper, diff <= tol, True), axis=(1, 2))
    glob = ascending & (p[:, 0] < p[:, -1] - tol)
    codes = np.full(n, "II", dtype=object)
    codes[glob] = "III"
    codes[no_inv] = "I"
    if d == 3:
        p1, p2, p3 = p[:, 0], p[:, 1], p[:, 2]

        def ge(a, b):
            return a >= b - tol

        def gt(a, b):
            return a > b + tol

        local = codes == "II"
        rules = [
            ("II_1", ge(p1, p3) & gt(p3, p2)),
            ("II_2", gt(p2, p1) & ge(p1, p3)),
            ("II_3", (gt(p2, p3) & ge(p3, p1)) | (ge(p2, p3) & gt(p3, p1))),
            ("II_4", (ge(p3, p1) & gt(p1, p2)) | (gt(p3, p1) & ge(p1, p2))),
        ]
        for name, mask in reversed(rules):
            codes[local & mask] = name
    return codes


def stage_labels(p):
    """Vectorised stage codes (``"I"``, ``"II_1"``..., ``"III"``) for a ``(n, d)`` population array."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return _stage_codes(p).astype(str)


def _label(code, p):
    ordering = tuple(int(i) + 1 for i in np.argsort(-np.asarray(p), kind="stable"))
    if code.startswith("II_"):
        return StageLabel("II", code, ordering)
    return StageLabel(code, None, ordering)


def classify_stage(p):
    p = check_populations(p)
    return _label(str(_stage_codes(p[None])[0]), p)


# ---------------------------------------------------------------------------
# full report


@dataclass(frozen=True)
class ErgotropyReport:
    stored_energy: float
    ergotropy: float
    incoherent_ergotropy: float
    coherent_ergotropy: float
    locked_energy: float
    efficiency: float | None
    coherence: float
    diag_entropy: float
    vn_entropy: float
    participation_ratio: float
    purity: float
    stage: StageLabel
    dephased_locked_energy: float = 0.0

    def as_dict(self):
        out = asdict(self)
        out["stage"] = str(self.stage)
        return out


def ergotropy_report(rho, h, rho_0=None):
    """All figures of merit for ``rho``; stored/locked energies are relative to ``rho_0``.

    ``rho_0`` defaults to the ground state of ``h``, the charging protocol's
    initial battery state.
    """
    if not isinstance(rho, QuantumState):
        rho = QuantumState(rho)
    row = evaluate_batch(rho.matrix[None], h, rho_0=rho_0, validate=False)
    eff = float(row["efficiency"][0])
    return ErgotropyReport(
        stored_energy=float(row["stored_energy"][0]),
        ergotropy=float(row["ergotropy"][0]),
        incoherent_ergotropy=float(row["incoherent_ergotropy"][0]),
        coherent_ergotropy=float(row["coherent_ergotropy"][0]),
        locked_energy=float(row["locked_energy"][0]),
        efficiency=None if np.isnan(eff) else eff,
        coherence=float(row["coherence"][0]),
        diag_entropy=float(row["diag_entropy"][0]),
        vn_entropy=float(row["vn_entropy"][0]),
        participation_ratio=float(row["participation_ratio"][0]),
        purity=float(row["purity"][0]),
        stage=_label(str(row["stage"][0]), row["populations"][0]),
        dephased_locked_energy=float(row["dephased_locked_energy"][0]),
    )


def evaluate_batch(states, h, rho_0=None, validate=True, populations_only=False):
    """Vectorised metrics for a stack of states.

    Parameters
    ----------
    states : array, shape (n, d, d) or (n, d)
        Density matrices in the computational basis, or (with
        ``populations_only=True``) population vectors already expressed in the
        eigenbasis of ``h`` (dephased states).
    h : BatteryHamiltonian
    rho_0 : QuantumState, optional
        Reference state for stored/locked energies; ground state if omitted.

    Returns
    -------
    dict of arrays keyed by metric name, plus ``populations``, ``spectrum``
    and ``stage``.  Undefined efficiencies are NaN.
    """
    e = h.energies
    if populations_only:
        p = np.atleast_2d(np.asarray(states, dtype=float))
        if p.shape[1] != h.dim:
            raise DimensionMismatchError(f"populations have {p.shape[1]} levels, Hamiltonian has {h.dim}")
        r = _sorted_desc(p)
        pur = np.sum(p**2, axis=1)
    else:
        x = check_states(states, h.dim) if validate else np.asarray(states, dtype=complex)
        u = h.basis
        x_e = u.conj().T @ x @ u
        p = np.einsum("nii->ni", x_e).real
        r = np.linalg.eigvalsh(x)[:, ::-1]
        pur = np.sum(np.abs(x) ** 2, axis=(1, 2))
    ref = None if rho_0 is None else float(np.dot(dephase(rho_0, h), e))
    return _batch_metrics(p, r, pur, e, ref)


def evaluate_pairs(states, energies, bases, validate=True):
    """Like ``evaluate_batch`` but with one Hamiltonian per state.

    ``energies`` has shape ``(n, d)`` (ascending per row) and ``bases`` shape
    ``(n, d, d)`` with eigenvectors as columns.  Energies are measured from
    each row's ground level.
    """
    x = check_states(states) if validate else np.asarray(states, dtype=complex)
    e = np.asarray(energies, dtype=float)
    u = np.asarray(bases, dtype=complex)
    if e.shape != x.shape[:2] or u.shape != x.shape:
        raise DimensionMismatchError("states, energies and bases must agree in count and dimension")
    if np.any(np.diff(e, axis=1) < 0):
        raise ValidationError("energies must be ascending in every row")
    x_e = np.conj(np.swapaxes(u, 1, 2)) @ x @ u
    p = np.einsum("nii->ni", x_e).real
    r = np.linalg.eigvalsh(x)[:, ::-1]
    pur = np.sum(np.abs(x) ** 2, axis=(1, 2))
    return _batch_metrics(p, r, pur, e, None)


def _batch_metrics(p, r, pur, e, ref):
    # e is (d,) or (n, d); ref=None measures energies from the ground level
    def dot(a):
        return np.sum(a * e, axis=-1)

    p_sorted = _sorted_desc(p)
    e1 = e[..., 0]
    stored = dot(p) - (e1 if ref is None else ref)
    erg = dot(p - r)
    inc = dot(p - p_sorted)
    coh_erg = dot(p_sorted - r)
    locked = dot(r) - (e1 if ref is None else ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = np.where(np.abs(stored) > ENERGY_TOL, erg / np.where(stored == 0, 1.0, stored), np.nan)
    # both sums run over descending vectors so diagonal states give exactly zero coherence
    s_diag = _shannon(p_sorted)
    s_vn = _shannon(r)
    return {
        "populations": p,
        "spectrum": r,
        "stored_energy": stored,
        "ergotropy": erg,
        "incoherent_ergotropy": inc,
        "coherent_ergotropy": coh_erg,
        "locked_energy": locked,
        "dephased_locked_energy": dot(p_sorted) - e1,
        "efficiency": eff,
        "coherence": s_diag - s_vn,
        "diag_entropy": s_diag,
        "vn_entropy": s_vn,
        "participation_ratio": 1.0 / np.sum(p**2, axis=1),
        "purity": pur,
        "stage": stage_labels(p),
    }
