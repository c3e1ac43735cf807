"""Stick-breaking reduction of a K-category response to K-1 independent
Bernoulli fits, and reconstruction of category probabilities.

Category k's conditional takes the units still "in play" (category >= k) and
models the indicator of landing exactly on k.  Conditionals map back to
category probabilities via p_k = ptilde_k * prod_{j<k} (1 - ptilde_j), with
the last category taking the remainder.  Category order matters; the default
is first-appearance order of the labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import gibbs_fit, make_design, vb_fit

__all__ = [
    "StickBreaking",
    "sb_decompose",
    "sb_reconstruct",
    "sb_conditionals",
    "fit_stick_breaking",
]


def sb_decompose(category, n_categories):
    """Per-conditional (response, included) pairs for one unit.

    For conditional k (1-based, k = 1..K-1): the unit is included iff its
    category is >= k, and its response is 1 iff the category equals k.
    Excluded conditionals report response 0.
    """
    category = int(category)
    if not 1 <= category <= n_categories:
        raise ValidationError(f"category must lie in 1..{n_categories}")
    return [(int(category == k), category >= k) for k in range(1, n_categories)]


def sb_reconstruct(ptilde):
    """Category probabilities from stick-breaking conditionals.

    p_1 = ptilde_1, p_k = ptilde_k * prod_{j<k}(1 - ptilde_j), and p_K is the
    leftover stick; the result is a length-K probability vector summing to 1.
    """
    ptilde = np.asarray(ptilde, dtype=np.float64)
    if ptilde.ndim != 1 or ptilde.size == 0:
        raise ValidationError("ptilde must be a nonempty 1-d vector")
    if np.any(ptilde <= 0.0) or np.any(ptilde >= 1.0):
        raise ValidationError("conditional probabilities must lie strictly in (0, 1)")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - ptilde)))
    p = np.empty(ptilde.size + 1)
    p[:-1] = ptilde * remaining[:-1]
    p[-1] = remaining[-1]
    return p


def sb_conditionals(p):
    """Inverse of sb_reconstruct: ptilde_k = p_k / sum_{j>=k} p_j.

    The tail-sum form is algebraically equal to p_k / (1 - sum_{j<k} p_j)
    when p sums to one, and avoids the cancellation of the subtraction.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValidationError("p must be a probability vector with at least 2 entries")
    if np.any(p <= 0.0):
        raise ValidationError("category probabilities must be strictly positive")
    if abs(p.sum() - 1.0) > 1e-8:
        raise ValidationError("category probabilities must sum to 1")
    tail = np.cumsum(p[::-1])[::-1]
    return p[:-1] / tail[:-1]


@dataclass(frozen=True)
class StickBreaking:
    """K-1 conditional Bernoulli fits, one per stick."""

    n_categories: int
    fits: tuple = field(repr=False)

    def __post_init__(self):
        if len(self.fits) != self.n_categories - 1:
            raise ValidationError("need exactly K-1 conditional fits")


def fit_stick_breaking(categories, X, G=None, weights=None, spec=None, fitter="vb",
                       rng=None, n_categories=None):
    """Fit the K-1 conditional models for a categorical response.

    categories are 1-based integer labels.  Each conditional k is fit on the
    subset with category >= k, with response I(category == k), reusing the
    unit's covariate rows; the conditionals are independent given the data.
    Weights are rescaled within every conditional subset.
    """
    categories = np.asarray(categories, dtype=np.int64)
    if n_categories is None:
        n_categories = int(categories.max())
    if n_categories < 2:
        raise ValidationError("a categorical response needs at least 2 categories")
    if np.any(categories < 1) or np.any(categories > n_categories):
        raise ValidationError(f"categories must lie in 1..{n_categories}")
    X = np.asarray(X, dtype=np.float64)
    if G is None:
        G = np.zeros((X.shape[0], 0))
    G = np.asarray(G, dtype=np.float64)
    if spec is None:
        from .model import BudisSpec

        spec = BudisSpec()
    fits = []
    for k in range(1, n_categories):
        include = categories >= k
        z = (categories[include] == k).astype(np.float64)
        w = None if weights is None else np.asarray(weights, dtype=np.float64)[include]
        data = make_design(X[include], G[include], z, weights=w)
        if fitter == "vb":
            fits.append(vb_fit(data, spec))
        elif fitter == "gibbs":
            if rng is None:
                raise ValidationError("gibbs fitting requires an rng")
            fits.append(gibbs_fit(data, spec, rng))
        else:
            raise ValidationError(f"unknown fitter {fitter!r}")
    return StickBreaking(n_categories=n_categories, fits=tuple(fits))
