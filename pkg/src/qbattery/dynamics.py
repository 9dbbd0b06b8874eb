"""Cavity-charged batteries: Jaynes-Cummings, Tavis-Cummings and open Dicke.

The battery of ``N_B`` two-level atoms is kept in its symmetric
(collective-spin ``j = N_B/2``) sector, so its dimension is ``N_B + 1`` and
``H_B = omega J_z`` has levels ``omega * (-j, ..., j)``.  Total states live on
battery (x) cavity with the cavity truncated at ``n_max`` photons.

Closed charging uses the exact spectral propagator of the time-independent
total Hamiltonian.  Cavity loss is integrated with fixed-step RK4 on
``drho/dt = -i[H, rho] + kappa D_a[rho]``.
"""

from dataclasses import dataclass, field, replace
from math import pi, sqrt

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln
from scipy.stats import poisson

from .core import BatteryHamiltonian, QuantumState
from .metrics import ErgotropyReport, _label, evaluate_batch
from .validation import ValidationError

MODELS = ("JC", "TC", "Dicke")
CHARGERS = ("coherent", "fock")
TAIL_TOL = 1e-12
NORM_TOL = 1e-9
PSD_TOL = 1e-8
HERM_TOL = 1e-10


class InvariantViolation(RuntimeError):
    """A propagated state broke trace, positivity or Hermiticity."""

    def __init__(self, invariant, time, value):
        super().__init__(f"{invariant} violated at t={time:.6g} (value {value:.3e})")
        self.invariant = invariant
        self.time = time
        self.value = value


@dataclass(frozen=True)
class CavityBatteryConfig:
    model: str = "JC"
    n_atoms: int = 1
    omega: float = 1.0
    g: float = 0.1
    charger: str = "coherent"
    n_photons: float = 4
    n_max: int | None = None
    kappa: float = 0.0
    tmax: float = 100.0
    points: int = 1001
    dt: float = 1e-3
    times: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}")
        if self.charger not in CHARGERS:
            raise ValidationError(f"charger must be one of {CHARGERS}")
        if self.model == "JC" and self.n_atoms != 1:
            raise ValidationError("the JC model has exactly one atom (n_atoms=1)")
        if int(self.n_atoms) < 1:
            raise ValidationError("n_atoms must be >= 1")
        if not (self.omega > 0 and self.g > 0):
            raise ValidationError("omega and g must be positive")
        if self.kappa < 0:
            raise ValidationError("kappa must be non-negative")
        if self.n_photons < 0:
            raise ValidationError("n_photons must be non-negative")
        if self.charger == "fock" and float(self.n_photons) != int(self.n_photons):
            raise ValidationError("a Fock charger needs an integer photon number")
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.times is None and (self.points < 1 or self.tmax < 0):
            raise ValidationError("need points >= 1 and tmax >= 0")
        n_max = self.default_n_max() if self.n_max is None else int(self.n_max)
        if n_max < self.n_photons + self.n_atoms:
            raise ValidationError(f"n_max={n_max} is below N_c + N_B = {self.n_photons + self.n_atoms}")
        object.__setattr__(self, "n_max", n_max)
        if self.times is not None:
            object.__setattr__(self, "times", tuple(float(t) for t in self.times))

    def default_n_max(self):
        return int(np.ceil(self.n_photons)) + int(self.n_atoms) + 20

    @property
    def battery_dim(self):
        return int(self.n_atoms) + 1

    @property
    def cavity_dim(self):
        return self.n_max + 1

    def time_grid(self):
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        return np.linspace(0.0, self.tmax, self.points)


# ---------------------------------------------------------------------------
# operators


def collective_spin(n_atoms):
    """``(J_z, J_+)`` on the symmetric sector, basis ordered m = -j .. j."""
    j = n_atoms / 2
    m = np.arange(-j, j + 1)
    jz = np.diag(m)
    jp = np.zeros((m.size, m.size))
    for k in range(m.size - 1):
        jp[k + 1, k] = sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    return jz, jp


def annihilation(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1)


def _operators(config):
    jz, jp = collective_spin(config.n_atoms)
    a = annihilation(config.n_max)
    ib, ic = np.eye(config.battery_dim), np.eye(config.cavity_dim)
    return {
        "Jz": np.kron(jz, ic),
        "Jp": np.kron(jp, ic),
        "Jx": np.kron(0.5 * (jp + jp.T), ic),
        "a": np.kron(ib, a),
        "n": np.kron(ib, a.T @ a),
    }


def build_hamiltonian(config):
    """Total Hamiltonian on battery (x) cavity and the battery Hamiltonian ``omega J_z``."""
    ops = _operators(config)
    w, g = config.omega, config.g
    a = ops["a"]
    h = w * ops["n"] + w * ops["Jz"]
    if config.model == "Dicke":
        h = h + 2 * w * g * ops["Jx"] @ (a + a.T)
    else:
        h = h + g * (ops["Jp"] @ a + ops["Jp"].T @ a.T)
    levels = w * np.arange(-config.n_atoms / 2, config.n_atoms / 2 + 1)
    return h.astype(complex), BatteryHamiltonian.from_energies(levels)


def charger_amplitudes(config):
    """Cavity amplitudes: Poissonian coherent state with mean ``N_c`` or Fock ``|N_c>``.

    Raises when the coherent-state tail beyond ``n_max`` exceeds 1e-12.
    """
    n = np.arange(config.cavity_dim)
    nc = float(config.n_photons)
    if config.charger == "fock":
        amp = np.zeros(config.cavity_dim)
        amp[int(nc)] = 1.0
        return amp
    tail = float(poisson.sf(config.n_max, nc)) if nc > 0 else 0.0
    if tail >= TAIL_TOL:
        raise ValidationError(f"coherent-state tail {tail:.2e} beyond n_max={config.n_max}; increase n_max")
    if nc == 0:
        amp = np.zeros(config.cavity_dim)
        amp[0] = 1.0
        return amp
    amp = np.exp(0.5 * (-nc + n * np.log(nc) - gammaln(n + 1)))
    return amp / np.linalg.norm(amp)


def initial_ket(config):
    battery = np.zeros(config.battery_dim)
    battery[0] = 1.0
    return np.kron(battery, charger_amplitudes(config)).astype(complex)


def initial_state(config):
    return QuantumState.from_ket(initial_ket(config))


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TimeSeries:
    """Per-time records of a charging run.

    ``metrics`` holds one array per figure of merit (as produced by
    ``evaluate_batch``), aligned with ``times``.
    """

    config: CavityBatteryConfig
    times: np.ndarray
    battery_states: np.ndarray
    metrics: dict
    photon_number: np.ndarray
    total_energy: np.ndarray
    excitations: np.ndarray
    trace: np.ndarray
    min_eigenvalue: np.ndarray

    def __len__(self):
        return self.times.size

    @property
    def populations(self):
        return self.metrics["populations"]

    def __getitem__(self, key):
        return self.metrics[key]

    def report(self, i):
        m = self.metrics
        eff = float(m["efficiency"][i])
        return ErgotropyReport(
            stored_energy=float(m["stored_energy"][i]),
            ergotropy=float(m["ergotropy"][i]),
            incoherent_ergotropy=float(m["incoherent_ergotropy"][i]),
            coherent_ergotropy=float(m["coherent_ergotropy"][i]),
            locked_energy=float(m["locked_energy"][i]),
            efficiency=None if np.isnan(eff) else eff,
            coherence=float(m["coherence"][i]),
            diag_entropy=float(m["diag_entropy"][i]),
            vn_entropy=float(m["vn_entropy"][i]),
            participation_ratio=float(m["participation_ratio"][i]),
            purity=float(m["purity"][i]),
            stage=_label(str(m["stage"][i]), m["populations"][i]),
            dephased_locked_energy=float(m["dephased_locked_energy"][i]),
        )


def _battery_marginals(rhos, db, dc):
    t = rhos.reshape(-1, db, dc, db, dc)
    red = np.einsum("tijkj->tik", t)
    return 0.5 * (red + np.conj(np.swapaxes(red, 1, 2)))


def _series(config, times, rhos_b, photon, energy, excit, trace, min_eig):
    _, hb = build_hamiltonian(config)
    metrics = evaluate_batch(rhos_b, hb, validate=False)
    return TimeSeries(config, times, rhos_b, metrics, photon, energy, excit, trace, min_eig)


def evolve_closed(config):
    """Charging without loss via the exact spectral propagator.

    The initial state is pure, so the wavefunction is propagated and the
    battery marginal taken as ``M M^dag`` with ``M`` the reshaped amplitude.
    """
    if config.kappa != 0:
        raise ValidationError("evolve_closed requires kappa = 0; use evolve_open")
    h, _ = build_hamiltonian(config)
    lam, v = np.linalg.eigh(h)
    psi0 = initial_ket(config)
    c = v.conj().T @ psi0
    times = config.time_grid()
    psi = (v @ (np.exp(-1j * np.outer(lam, times)) * c[:, None])).T  # (nt, dim)
    norm = np.sum(np.abs(psi) ** 2, axis=1)
    bad = np.flatnonzero(np.abs(norm - 1) > NORM_TOL)
    if bad.size:
        raise InvariantViolation("norm", times[bad[0]], norm[bad[0]] - 1)
    db, dc = config.battery_dim, config.cavity_dim
    amp = psi.reshape(-1, db, dc)
    rhos_b = amp @ np.conj(np.swapaxes(amp, 1, 2))
    rhos_b = 0.5 * (rhos_b + np.conj(np.swapaxes(rhos_b, 1, 2)))
    ops = _operators(config)
    excit_op = ops["n"] + ops["Jz"] + config.n_atoms / 2 * np.eye(h.shape[0])
    photon = np.einsum("ti,ij,tj->t", psi.conj(), ops["n"], psi).real
    energy = np.einsum("ti,ij,tj->t", psi.conj(), h, psi).real
    excit = np.einsum("ti,ij,tj->t", psi.conj(), excit_op, psi).real
    return _series(config, times, rhos_b, photon, energy, excit, norm, np.zeros_like(times))


def lindblad_rhs(h, a, kappa, dims=None):
    """Return ``f(rho)`` for ``drho/dt = -i[H, rho] + kappa (a rho a^dag - {a^dag a, rho}/2)``.

    Uses ``H_eff = H - i kappa/2 a^dag a`` and symmetrises, so the derivative
    of a Hermitian matrix is exactly Hermitian.  With ``dims = (d_B, d_C)``
    the jump term ``a rho a^dag`` for ``a = 1 (x) a_cavity`` is evaluated by
    index shifting instead of two sparse products.
    """
    h = sp.csr_matrix(h)
    a = sp.csr_matrix(a)
    h_eff = (h - 0.5j * kappa * (a.conj().T @ a)).tocsr()
    if dims is not None:
        db, dc = dims
        root = np.sqrt(np.arange(1, dc))
        weight = 0.5 * kappa * np.multiply.outer(root, root)[None, :, None, :]

    def jump(rho):
        if dims is None:
            return 0.5 * kappa * (a @ (a @ rho).conj().T)
        r = rho.reshape(db, dc, db, dc)
        out = np.zeros_like(r)
        out[:, :-1, :, :-1] = weight * r[:, 1:, :, 1:]
        return out.reshape(rho.shape)

    def rhs(rho):
        x = -1j * (h_eff @ rho)
        if kappa:
            x = x + jump(rho)
        return x + x.conj().T

    return rhs


def rk4_step(f, rho, dt):
    k1 = f(rho)
    k2 = f(rho + 0.5 * dt * k1)
    k3 = f(rho + 0.5 * dt * k2)
    k4 = f(rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_open(config):
    """RK4 integration of the damped-cavity master equation.

    Steps of at most ``config.dt`` are taken so that every output time is hit
    exactly.  Trace, positivity and Hermiticity are checked at each output
    time; a failure raises ``InvariantViolation`` naming the invariant.
    """
    if config.model != "Dicke":
        raise ValidationError("evolve_open is defined for the Dicke model")
    h, _ = build_hamiltonian(config)
    ops = _operators(config)
    f = lindblad_rhs(h, ops["a"], config.kappa, (config.battery_dim, config.cavity_dim))
    times = config.time_grid()
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValidationError("output times must be non-negative and increasing")
    psi0 = initial_ket(config)
    rho = np.outer(psi0, psi0.conj())
    dim = rho.shape[0]
    out = np.empty((times.size, dim, dim), dtype=complex)
    t_now = 0.0
    for i, t in enumerate(times):
        span = t - t_now
        if span > 0:
            n = int(np.ceil(span / config.dt - 1e-9))
            step = span / n
            for _ in range(n):
                rho = rk4_step(f, rho, step)
        t_now = t
        _check_density(rho, t)
        out[i] = rho
    db, dc = config.battery_dim, config.cavity_dim
    excit_op = ops["n"] + ops["Jz"] + config.n_atoms / 2 * np.eye(dim)
    trace = np.einsum("tii->t", out).real
    photon = np.einsum("ij,tji->t", ops["n"], out).real
    energy = np.einsum("ij,tji->t", h, out).real
    excit = np.einsum("ij,tji->t", excit_op, out).real
    min_eig = np.linalg.eigvalsh(out)[:, 0]
    rhos_b = _battery_marginals(out, db, dc)
    return _series(config, times, rhos_b, photon, energy, excit, trace, min_eig)


def _check_density(rho, t):
    tr = np.trace(rho).real
    if abs(tr - 1) > NORM_TOL:
        raise InvariantViolation("trace", t, tr - 1)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > HERM_TOL:
        raise InvariantViolation("hermiticity", t, herm)
    lam = float(np.linalg.eigvalsh(rho)[0])
    if lam < -PSD_TOL:
        raise InvariantViolation("positivity", t, lam)


def evolve(config):
    """Closed evolution when ``kappa == 0`` else the master equation."""
    return evolve_closed(config) if config.kappa == 0 else evolve_open(config)


# ---------------------------------------------------------------------------
# JC closed forms


def rabi_frequency(g, photons):
    """Splitting of the ``{|g, n>, |e, n-1>}`` block, ``2 g sqrt(n)``."""
    return 2 * g * np.sqrt(photons)


def fock_period(g, photons):
    """Period of the Fock-charger ergotropy, ``pi / (g sqrt(n))`` for a cavity in ``|n>``."""
    return pi / (g * sqrt(photons))


def jc_battery_marginal(config, t):
    """Analytic 2x2 battery states (rows over ``t``) of the resonant JC model.

    A cavity component ``|k>`` with amplitude ``c_k`` rotates within
    ``{|g, k>, |e, k-1>}``: ``cos(g sqrt(k) t)|g,k> - i sin(g sqrt(k) t)|e,k-1>``.
    Block-dependent free phases only rotate the battery coherence and are
    dropped (they do not change the spectrum or populations).
    """
    if config.model != "JC":
        raise ValidationError("closed form is for the JC model")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    c = charger_amplitudes(config)
    k = np.arange(c.size)
    phase = np.outer(t, config.g * np.sqrt(k))  # (nt, K)
    ground = c * np.cos(phase)  # amplitude of |g, k>
    excited = -1j * c * np.sin(phase)  # amplitude of |e, k-1>, defined for k >= 1
    p_e = np.sum(np.abs(excited) ** 2, axis=1)
    p_g = np.sum(np.abs(ground) ** 2, axis=1)
    # <e|rho_B|g> = sum_{k} <e,k|psi> <psi|g,k>; |e,k> carries cavity index k+1 in the block labelling
    coh = np.sum(excited[:, 1:] * np.conj(ground[:, :-1]), axis=1)
    rho = np.zeros((t.size, 2, 2), dtype=complex)
    rho[:, 0, 0] = p_g
    rho[:, 1, 1] = p_e
    rho[:, 1, 0] = coh
    rho[:, 0, 1] = np.conj(coh)
    return rho


def jc_analytic_ergotropy(config, t):
    """Closed-form JC ergotropy.

    ``E(t) = -(w/2) sum_k |c_k|^2 cos(2 g sqrt(k) t) + (w/2) sqrt(1 - 4 det rho_B)``
    with ``rho_B`` from ``jc_battery_marginal``.
    """
    rho = jc_battery_marginal(config, t)
    c2 = np.abs(charger_amplitudes(config)) ** 2
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = np.arange(c2.size)
    w = config.omega
    det = np.real(rho[:, 0, 0] * rho[:, 1, 1] - rho[:, 0, 1] * rho[:, 1, 0])
    mean_jz = -0.5 * np.cos(np.outer(t, rabi_frequency(config.g, k))) @ c2
    return w * mean_jz + 0.5 * w * np.sqrt(np.clip(1 - 4 * det, 0.0, None))


def jc_fock_ergotropy(omega, g, photons, t):
    """Piecewise ergotropy for a Fock charger ``|n>``: ``-w cos(Omega t)`` on the inverted half-period, else 0."""
    t = np.asarray(t, dtype=float)
    period = fock_period(g, photons)
    phase = np.mod(t, period)
    inverted = (phase >= period / 4) & (phase <= 3 * period / 4)
    return np.where(inverted, -omega * np.cos(rabi_frequency(g, photons) * t), 0.0)


def with_times(config, times):
    return replace(config, times=tuple(float(x) for x in times))
