"""Seedable random states, unitaries and Hamiltonians.

Streams are built on numpy's counter-based ``Philox`` bit generator.  Draw
``i`` of a stream always comes from chunk ``i // CHUNK``, whose generator is
keyed by ``(seed, spawn_key=(0, chunk))``; the result therefore does not
depend on how chunks are spread across workers.

Samplers
--------
HSRS  Hilbert-Schmidt states, ``G G^dag / Tr`` with ``G`` complex Ginibre.
FERS  dephased states mixing HSRS populations with a sparse low-entropy
      generator, weighted by the ratio ``N / N_HS``.
FPRS  states with a controlled spectrum in a low/medium/high purity band,
      rotated by a Haar unitary.
GUE   Hamiltonians ``(G + G^dag) / 2``, optionally normalised to [-1, 1].
Haar  unitaries from QR of a Ginibre matrix with the R-diagonal phase fix.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import floor, sqrt

import numpy as np

from .core import BatteryHamiltonian, QuantumState, normalize_energies
from .validation import ValidationError

CHUNK = 4096
STATE_STREAM = 0
HAMILTONIAN_STREAM = 1
METHODS = ("HSRS", "FERS", "FPRS", "GUE", "Haar")
REGIONS = ("low", "medium", "high")


def make_rng(seed, *key):
    """Philox generator for substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _ginibre(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# Hilbert-Schmidt states and Haar unitaries


def sample_hs_states(n, d, rng):
    g = _ginibre(rng, (n, d, d))
    w = g @ np.conj(np.swapaxes(g, 1, 2))
    w = 0.5 * (w + np.conj(np.swapaxes(w, 1, 2)))
    return w / np.einsum("nii->n", w).real[:, None, None]


def sample_hs_state(d, rng):
    if d < 2:
        raise ValidationError("HSRS needs d >= 2")
    return QuantumState(sample_hs_states(1, d, rng)[0])


def sample_haar_unitaries(n, d, rng):
    q, r = np.linalg.qr(_ginibre(rng, (n, d, d)))
    diag = np.einsum("nii->ni", r)
    phases = diag / np.abs(diag)
    return q * phases[:, None, :]


def sample_haar_unitary(d, rng):
    return sample_haar_unitaries(1, d, rng)[0]


# ---------------------------------------------------------------------------
# full-entropy-range sampling


def sample_low_entropy_populations(n, d, rng):
    """Sparse population vectors: ``k ~ U{1..d-1}`` uniform values, zero padded, shuffled."""
    out = np.empty((n, d))
    todo = np.arange(n)
    while todo.size:
        m = todo.size
        k = rng.integers(1, d, size=m)  # upper bound exclusive: k in {1..d-1}
        x = rng.random((m, d))
        x[np.arange(d)[None, :] >= k[:, None]] = 0.0
        x = rng.permuted(x, axis=1)
        s = x.sum(axis=1)
        ok = s >= 1e-12
        out[todo[ok]] = x[ok] / s[ok, None]
        todo = todo[~ok]
    return out


def sample_low_entropy_dephased(d, rng):
    if d < 2:
        raise ValidationError("FERS needs d >= 2")
    return sample_low_entropy_populations(1, d, rng)[0]


def hs_populations(n, d, rng):
    """Populations of HSRS states in a fixed basis (the dephased HSRS ensemble)."""
    return np.einsum("nii->ni", sample_hs_states(n, d, rng)).real


def sample_fers(d, n, rng, ratio=Fraction(3, 2)):
    """FERS stream of ``n`` population vectors.

    Each draw is low-entropy with probability ``N/(N + N_HS)``, else the
    dephased HSRS populations.  Returns ``(populations, is_low)``.
    """
    ratio = Fraction(ratio)
    if ratio < 0:
        raise ValidationError("FERS ratio must be non-negative")
    p_low = float(ratio / (1 + ratio))
    is_low = rng.random(n) < p_low
    pops = np.empty((n, d))
    n_low = int(is_low.sum())
    pops[is_low] = sample_low_entropy_populations(n_low, d, rng)
    pops[~is_low] = hs_populations(n - n_low, d, rng)
    return pops, is_low


# ---------------------------------------------------------------------------
# full-purity-range sampling


@dataclass(frozen=True)
class PurityRegion:
    label: str
    low: float
    high: float


def purity_region(label, d):
    """Interval of the top-eigenvalue shift ``dr1`` delimiting a purity band."""
    a = (d - 1) / (sqrt(3) * d)
    bounds = {
        "low": (0.0, a),
        "medium": (a, sqrt(2) * a),
        "high": (sqrt(2) * a, (d - 1) / d),
    }
    if label not in bounds:
        raise ValidationError(f"unknown purity region {label!r}")
    return PurityRegion(label, *bounds[label])


def fprs_purity_bounds(d, dr1):
    """Smallest and largest purity reachable with top-eigenvalue shift ``dr1``."""
    if not -1e-15 <= dr1 <= (d - 1) / d + 1e-15:
        raise ValidationError(f"dr1={dr1} outside [0, (d-1)/d]")
    m = floor(dr1 * d)
    p_min = 1 / d + dr1**2 + dr1**2 / (d - 1)
    p_max = 1 / d + dr1**2 + m / d**2 + (dr1 - m / d) ** 2
    return p_min, p_max


def _uniform_capped_simplex(totals, size, cap, rng):
    """Uniform points ``u >= 0`` with ``sum u = total`` and every ``u_i <= cap``, by rejection."""
    out = np.empty((totals.size, size))
    todo = np.arange(totals.size)
    while todo.size:
        e = rng.standard_exponential((todo.size, size))
        u = totals[todo, None] * e / e.sum(axis=1, keepdims=True)
        ok = np.all(u <= cap, axis=1)
        out[todo[ok]] = u[ok]
        todo = todo[~ok]
    return out


def fprs_spectra(dr1, d, rng):
    """Spectra ``(1/d + dr1, 1/d - dr_2, ..., 1/d - dr_d)`` with the shifts drawn uniformly.

    The shifts are uniform on ``{sum dr_n = dr1, 0 <= dr_n <= 1/d}``.  When
    ``dr1`` exceeds half its range the complementary variables
    ``u_n = 1/d - dr_n`` are sampled instead; the map is an affine bijection of
    the same polytope, so uniformity is kept while rejection stays cheap.
    """
    dr1 = np.asarray(dr1, dtype=float)
    n = dr1.size
    r = np.empty((n, d))
    r[:, 0] = 1 / d + dr1
    if d == 1:
        return r
    top = (d - 1) / d
    flip = dr1 > top / 2
    totals = np.where(flip, top - dr1, dr1)
    totals = np.clip(totals, 0.0, None)
    u = _uniform_capped_simplex(totals, d - 1, 1 / d, rng)
    r[:, 1:] = np.where(flip[:, None], u, 1 / d - u)
    return r


def _region_index(regions):
    return np.array([REGIONS.index(x) for x in regions], dtype=int)


def sample_fprs_batch(n, d, rng, weights=(0.2, 0.5, 0.3), regions=None, delta_r1=None):
    """FPRS draws.  Returns ``(states, delta_r1, region_labels)``.

    Regions are picked with probabilities ``weights`` (low, medium, high)
    unless ``regions`` is given; ``delta_r1`` can be pinned to bypass the
    region draw entirely.
    """
    if delta_r1 is not None:
        dr1 = np.broadcast_to(np.asarray(delta_r1, dtype=float), (n,)).copy()
        idx = np.full(n, -1)
    else:
        if regions is None:
            w = np.asarray(weights, dtype=float)
            idx = rng.choice(3, size=n, p=w / w.sum())
        else:
            idx = _region_index(np.broadcast_to(np.asarray(regions, dtype=object), (n,)))
        lo = np.array([purity_region(x, d).low for x in REGIONS])[idx]
        hi = np.array([purity_region(x, d).high for x in REGIONS])[idx]
        dr1 = lo + (hi - lo) * rng.random(n)
    spectra = fprs_spectra(dr1, d, rng)
    u = sample_haar_unitaries(n, d, rng)
    states = (u * spectra[:, None, :]) @ np.conj(np.swapaxes(u, 1, 2))
    states = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    labels = np.array(["fixed", *REGIONS], dtype=object)[idx + 1]
    return states, dr1, labels.astype(str)


def sample_fprs(d, region, rng, delta_r1=None, return_delta=False):
    if isinstance(region, PurityRegion):
        region = region.label
    states, dr1, _ = sample_fprs_batch(1, d, rng, regions=[region], delta_r1=delta_r1)
    state = QuantumState(states[0])
    return (state, float(dr1[0])) if return_delta else state


# ---------------------------------------------------------------------------
# Hamiltonians


def sample_gue_hamiltonian(d, rng, normalize=True):
    """GUE Hamiltonian ``(G + G^dag)/2``; redrawn in the (measure-zero) fully degenerate case."""
    while True:
        g = _ginibre(rng, (d, d))
        h = 0.5 * (g + g.conj().T)
        e, v = np.linalg.eigh(h)
        if e[-1] - e[0] > 1e-12 or d == 1:
            break
    if normalize:
        e = normalize_energies(e)
    return BatteryHamiltonian(e, v)


def sample_gue_spectra(n, d, rng):
    """Raw (un-normalised) GUE eigenvalues, ascending, for ``n`` draws."""
    g = _ginibre(rng, (n, d, d))
    h = 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))
    return np.linalg.eigvalsh(h)


# ---------------------------------------------------------------------------
# reproducible streams


@dataclass(frozen=True)
class SamplerSpec:
    """Everything that determines a sample stream."""

    method: str
    dim: int
    seed: int
    fers_ratio: Fraction = Fraction(3, 2)
    fprs_weights: tuple = (0.2, 0.5, 0.3)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown sampler {self.method!r}; choose from {METHODS}")
        if int(self.dim) < 2:
            raise ValidationError("sampler dimension must be >= 2")
        w = np.asarray(self.fprs_weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0) or not w.sum() > 0:
            raise ValidationError("FPRS weights must be three non-negative numbers, not all zero")
        if Fraction(self.fers_ratio) < 0:
            raise ValidationError("FERS ratio must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "fers_ratio", Fraction(self.fers_ratio))
        object.__setattr__(self, "fprs_weights", tuple(float(x) for x in w))


@dataclass
class Draws:
    """Output of ``draw``.  Only the arrays relevant to the method are filled."""

    method: str
    states: np.ndarray | None = None
    populations: np.ndarray | None = None
    unitaries: np.ndarray | None = None
    energies: np.ndarray | None = None
    bases: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __len__(self):
        for a in (self.states, self.populations, self.unitaries, self.energies):
            if a is not None:
                return len(a)
        return 0


def _draw_chunk(spec, j, m):
    rng = make_rng(spec.seed, STATE_STREAM, j)
    d = spec.dim
    if spec.method == "HSRS":
        return {"states": sample_hs_states(m, d, rng)}
    if spec.method == "FERS":
        pops, low = sample_fers(d, m, rng, spec.fers_ratio)
        return {"populations": pops, "source": np.where(low, "low", "hs")}
    if spec.method == "FPRS":
        states, dr1, labels = sample_fprs_batch(m, d, rng, spec.fprs_weights)
        return {"states": states, "delta_r1": dr1, "region": labels}
    if spec.method == "GUE":
        g = _ginibre(rng, (m, d, d))
        e, v = np.linalg.eigh(0.5 * (g + np.conj(np.swapaxes(g, 1, 2))))
        return {"energies": e, "bases": v}
    return {"unitaries": sample_haar_unitaries(m, d, rng)}


def draw(spec, n, workers=1, start=0):
    """Draws ``start .. start+n-1`` of the stream described by ``spec``.

    Chunks are generated independently (optionally on ``workers`` threads)
    and reassembled in index order, so the output is identical for any
    worker count.
    """
    if n < 0 or start < 0:
        raise ValidationError("n and start must be non-negative")
    first, last = start // CHUNK, (start + n - 1) // CHUNK if n else start // CHUNK - 1
    jobs = list(range(first, last + 1))
    run = lambda j: _draw_chunk(spec, j, CHUNK)  # noqa: E731
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    lo = start - first * CHUNK
    out = Draws(spec.method)
    if not parts:
        return out
    for key in parts[0]:
        arr = np.concatenate([p[key] for p in parts])[lo : lo + n]
        if hasattr(out, key) and key != "extras":
            setattr(out, key, arr)
        else:
            out.extras[key] = arr
    return out


def hamiltonian_for(seed, d, kind="gue"):
    """The experiment Hamiltonian: one normalised GUE draw from its own substream, or equally spaced."""
    if kind == "equal":
        return BatteryHamiltonian.equally_spaced(d)
    if kind != "gue":
        raise ValidationError(f"unknown Hamiltonian kind {kind!r}")
    return sample_gue_hamiltonian(d, make_rng(seed, HAMILTONIAN_STREAM, 0), normalize=True)
