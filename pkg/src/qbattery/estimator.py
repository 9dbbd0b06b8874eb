"""scikit-learn style wrapper around the ergotropy metrics.

``ErgotropyDecomposer`` is a stateless transformer: ``fit`` only records the
battery Hamiltonian (or builds one from the ``energies`` parameter),
``transform`` maps a stack of density matrices to a feature matrix of
figures of merit and ``predict`` returns the population-inversion stage.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import BatteryHamiltonian
from .metrics import evaluate_batch
from .validation import DimensionMismatchError, ValidationError, check_states

FEATURES = (
    "stored_energy",
    "ergotropy",
    "incoherent_ergotropy",
    "coherent_ergotropy",
    "locked_energy",
    "efficiency",
    "coherence",
    "diag_entropy",
    "vn_entropy",
    "participation_ratio",
    "purity",
)


class ErgotropyDecomposer(TransformerMixin, BaseEstimator):
    """Decompose battery states into coherent and incoherent ergotropy.

    Parameters
    ----------
    hamiltonian : BatteryHamiltonian or array, optional
        Battery Hamiltonian (matrix or spectral form).  If omitted an
        equally spaced spectrum on [-1, 1] of the input dimension is used.
    normalize : bool
        Rescale the spectrum onto [-1, 1] before scoring.
    features : sequence of str, optional
        Subset of ``FEATURES`` to emit (default: all, in that order).
    """

    def __init__(self, hamiltonian=None, normalize=False, features=None):
        self.hamiltonian = hamiltonian
        self.normalize = normalize
        self.features = features

    def _resolve(self, d):
        h = self.hamiltonian
        if h is None:
            h = BatteryHamiltonian.equally_spaced(d)
        elif not isinstance(h, BatteryHamiltonian):
            h = BatteryHamiltonian.from_matrix(np.asarray(h))
        if self.normalize:
            h = h.normalized()
        if h.dim != d:
            raise DimensionMismatchError(f"states are {d}-dimensional, Hamiltonian is {h.dim}-dimensional")
        return h

    def fit(self, X, y=None):
        X = check_states(X)
        feats = FEATURES if self.features is None else tuple(self.features)
        unknown = set(feats) - set(FEATURES)
        if unknown:
            raise ValidationError(f"unknown features {sorted(unknown)}")
        self.hamiltonian_ = self._resolve(X.shape[1])
        self.features_ = feats
        self.n_features_in_ = X.shape[1]
        return self

    def _evaluate(self, X):
        check_is_fitted(self, "hamiltonian_")
        X = check_states(X, self.n_features_in_)
        return evaluate_batch(X, self.hamiltonian_, validate=False)

    def transform(self, X):
        """Feature matrix of shape ``(n_states, n_features)``; undefined efficiency is NaN."""
        m = self._evaluate(X)
        return np.column_stack([m[f] for f in self.features_])

    def predict(self, X):
        """Stage codes: ``"I"``, ``"II"`` (or ``"II_1"`` .. ``"II_4"`` for three levels), ``"III"``."""
        return self._evaluate(X)["stage"]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "features_")
        return np.asarray(self.features_, dtype=object)
