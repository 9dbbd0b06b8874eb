"""Coherent-ergotropy envelopes and the entropy/incoherent-ergotropy effect classifier.

Envelopes
---------
For a coherence value ``C`` the lower envelope is the smallest
``sum_n p_n e_n - e_1`` over descending ``p`` with Shannon entropy ``C`` (the
pure-state construction), and the upper envelope is the largest
``sum_n (1/d - r_n) e_n`` over descending ``r`` with entropy ``log d - C`` (the
completely delocalised construction).  Both are energy extrema at fixed
entropy, attained on thermal families ``p_n ~ exp(-alpha e_n)``; the solver
bisects on ``alpha`` for every family supported on the lowest ``k`` distinct
levels and keeps the extremum.
"""

from dataclasses import dataclass

import numpy as np

from .core import BatteryHamiltonian
from .metrics import _shannon, incoherent_ergotropy_from_populations
from .validation import ValidationError

ALPHA_MAX = 1e6
BISECTION_STEPS = 200
DEGENERACY_TOL = 1e-12
DEFAULT_GRID = 512


def _energies(h):
    return h.energies if isinstance(h, BatteryHamiltonian) else np.sort(np.asarray(h, dtype=float))


def merge_levels(energies, tol=DEGENERACY_TOL):
    """Distinct levels and their multiplicities."""
    e = np.sort(np.asarray(energies, dtype=float))
    levels, mult = [e[0]], [1]
    for x in e[1:]:
        if x - levels[-1] <= tol:
            mult[-1] += 1
        else:
            levels.append(x)
            mult.append(1)
    return np.array(levels), np.array(mult, dtype=float)


def _thermal(levels, mult, alpha):
    """Level weights, entropy and mean energy of the thermal family at ``alpha`` (vectorised)."""
    alpha = np.asarray(alpha, dtype=float)
    w = mult * np.exp(-alpha[..., None] * (levels - levels[0]))
    q = w / w.sum(axis=-1, keepdims=True)
    s = _shannon(q) + q @ np.log(mult)
    return q, s, q @ levels


def _solve_alpha(levels, mult, target):
    """Bisection for ``alpha >= 0`` with thermal entropy equal to ``target``.

    Entropy decreases strictly in ``alpha`` on ``[0, inf)``; targets outside
    the reachable range clamp to the nearest end.
    """
    target = np.asarray(target, dtype=float)
    lo = np.zeros_like(target)
    hi = np.full_like(target, ALPHA_MAX)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        _, s, _ = _thermal(levels, mult, mid)
        above = s > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    alpha = 0.5 * (lo + hi)
    # the maximal-entropy end is the uniform distribution exactly
    s0 = np.log(mult.sum())
    return np.where(target >= s0 - 1e-15, 0.0, alpha)


def thermal_solution(h, entropy):
    """Thermal populations (full support) whose Shannon entropy equals ``entropy``.

    Returns ``(alpha, populations)``; populations are per eigenlevel, with a
    degenerate level's weight split evenly.
    """
    e = _energies(h)
    levels, mult = merge_levels(e)
    target = float(entropy)
    if not 0.0 <= target <= np.log(e.size) + 1e-12:
        raise ValidationError(f"entropy {target} outside [0, log d]")
    alpha = float(_solve_alpha(levels, mult, target))
    p = np.exp(-alpha * (e - e[0]))
    return alpha, p / p.sum()


def _min_energy_at_entropy(e, entropy):
    """Minimum mean energy over distributions with the given entropy, minus ``e_1``."""
    levels, mult = merge_levels(e)
    entropy = np.asarray(entropy, dtype=float)
    best = np.full(entropy.shape, np.inf)
    for k in range(1, levels.size + 1):
        lv, mu = levels[:k], mult[:k]
        cap = np.log(mu.sum())
        feasible = entropy <= cap + 1e-12
        if not np.any(feasible):
            continue
        if k == 1:
            # entropy within a degenerate ground manifold costs no energy
            val = np.full(entropy.shape, lv[0])
        else:
            alpha = _solve_alpha(lv, mu, np.minimum(entropy, cap))
            _, _, val = _thermal(lv, mu, alpha)
        best = np.where(feasible, np.minimum(best, val), best)
    return best - levels[0]


def _check_coherence(c, d):
    c = np.asarray(c, dtype=float)
    if np.any(c < -1e-12) or np.any(c > np.log(d) + 1e-12):
        raise ValidationError(f"coherence must lie in [0, log {d}]")
    return np.clip(c, 0.0, np.log(d))


def pure_state_bound(c, h):
    """Lower envelope of the coherent ergotropy at coherence ``c`` (vectorised in ``c``)."""
    e = _energies(h)
    c = _check_coherence(c, e.size)
    out = _min_energy_at_entropy(e, c)
    out = np.where(c == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def deloc_state_bound(c, h):
    """Upper envelope of the coherent ergotropy at coherence ``c`` (vectorised in ``c``)."""
    e = _energies(h)
    d = e.size
    c = _check_coherence(c, d)
    out = (e.mean() - e[0]) - _min_energy_at_entropy(e, np.log(d) - c)
    out = np.where(c == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundBand:
    coherence: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def interpolate(self, c):
        c = np.asarray(c, dtype=float)
        return np.interp(c, self.coherence, self.lower), np.interp(c, self.coherence, self.upper)

    def grid_error(self, c):
        """Bound on the interpolation error at ``c``.

        Both envelopes are non-decreasing, so within a grid cell the linear
        interpolant differs from the curve by at most the cell's rise.
        """
        c = np.asarray(c, dtype=float)
        k = np.clip(np.searchsorted(self.coherence, c, side="right") - 1, 0, self.coherence.size - 2)
        return np.abs(np.diff(self.lower))[k], np.abs(np.diff(self.upper))[k]

    def contains(self, c, ec, tol=1e-6):
        lo, up = self.interpolate(c)
        err_lo, err_up = self.grid_error(c)
        ec = np.asarray(ec, dtype=float)
        return (ec >= lo - tol - err_lo) & (ec <= up + tol + err_up)

    @property
    def gap(self):
        return self.upper - self.lower


def bound_band(h, grid_size=DEFAULT_GRID):
    """Both envelopes on a uniform coherence grid over ``[0, log d]``."""
    e = _energies(h)
    if grid_size < 2:
        raise ValidationError("grid_size must be >= 2")
    grid = np.linspace(0.0, np.log(e.size), grid_size)
    return BoundBand(grid, pure_state_bound(grid, e), deloc_state_bound(grid, e))


# ---------------------------------------------------------------------------
# diagonal entropy vs incoherent ergotropy, three levels


@dataclass(frozen=True)
class EntropyEffect:
    """Signs of the first-order changes and the resulting verdict.

    ``verdict`` is ``enhance`` (same signs), ``suppress`` (opposite signs),
    ``maintain`` (entropy moves, incoherent ergotropy does not), ``other``
    (the reverse) or ``unsupported`` for population orderings outside the
    two tabulated cases.
    """

    dS_sign: int
    dEi_sign: int
    verdict: str
    case: str | None = None
    dS: float = 0.0
    dEi: float = 0.0


def _ascending_order(p):
    return np.argsort(p, kind="stable")


def _ordering_preserved(p, q):
    # every pairwise relation of p (<, =, >) must survive in q, allowing ties to open
    for a in range(p.size):
        for b in range(p.size):
            if p[a] < p[b] and not q[a] <= q[b]:
                return False
    return True


def entropy_gradient(p, dp):
    """First-order change of the diagonal entropy, ``dp_i log(p_k/p_i) + dp_j log(p_k/p_j)``.

    ``(i, j, k)`` index ``p`` in ascending order.  Requires three strictly
    positive populations, a perturbation summing to zero and preserving the
    ordering.
    """
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    if p.shape != (3,) or dp.shape != (3,):
        raise ValidationError("entropy_gradient is defined for three levels")
    if np.any(p <= 0):
        raise ValidationError("populations must be strictly positive (log divergence)")
    if abs(dp.sum()) > 1e-12:
        raise ValidationError("perturbation must sum to zero")
    if not _ordering_preserved(p, p + dp):
        raise ValidationError("perturbation changes the population ordering")
    i, j, k = _ascending_order(p)
    return float(dp[i] * np.log(p[k] / p[i]) + dp[j] * np.log(p[k] / p[j]))


def _sign(x, tol):
    return 0 if abs(x) <= tol else (1 if x > 0 else -1)


_VERDICTS = {
    (1, 1): "enhance",
    (-1, -1): "enhance",
    (1, -1): "suppress",
    (-1, 1): "suppress",
    (1, 0): "maintain",
    (-1, 0): "maintain",
    (0, 0): "maintain",
    (0, 1): "other",
    (0, -1): "other",
}


def population_case(p, tol=1e-12):
    """``"global"`` for p1 <= p2 <= p3 with p1 < p3, ``"II_1"`` for p1 >= p3 > p2, else None."""
    p1, p2, p3 = p
    if p1 <= p2 + tol and p2 <= p3 + tol and p1 < p3 - tol:
        return "global"
    if p1 >= p3 - tol and p3 > p2 + tol:
        return "II_1"
    return None


def classify_entropy_effect(p, dp, energies=(-1.0, 0.0, 1.0), tol=0.0):
    """Classify how a small population change moves diagonal entropy and incoherent ergotropy.

    The entropy change is the first-order gradient term; the incoherent
    ergotropy change is evaluated directly from its definition, which is
    exactly linear while the population ordering is unchanged.
    """
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    case = population_case(p)
    if case is None:
        return EntropyEffect(0, 0, "unsupported")
    ds = entropy_gradient(p, dp)
    e = np.asarray(energies, dtype=float)
    perm = np.argsort(-p, kind="stable")
    dei = float(np.dot(dp - dp[perm], e))
    s_ds, s_dei = _sign(ds, tol), _sign(dei, tol)
    return EntropyEffect(s_ds, s_dei, _VERDICTS[(s_ds, s_dei)], case, ds, dei)


def incoherent_change(p, dp, energies=(-1.0, 0.0, 1.0)):
    """Exact change of the incoherent ergotropy between ``p`` and ``p + dp``."""
    e = np.asarray(energies, dtype=float)
    return float(
        incoherent_ergotropy_from_populations(np.asarray(p) + np.asarray(dp), e)
        - incoherent_ergotropy_from_populations(p, e)
    )
