"""Sampling designs and direct estimators: Poisson PPS draws with an
informative size variable, and weighted (Hajek) / unweighted area means."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = ["DesignDraw", "poisson_pps_sample", "informative_size", "direct_estimate"]


@dataclass(frozen=True)
class DesignDraw:
    """One realized sample: positions into the population, their inclusion
    probabilities, and the implied survey weights 1/pi."""

    indices: np.ndarray = field(repr=False)
    pi: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.indices.shape[0]


def poisson_pps_sample(sizes, expected_n, rng):
    """Poisson sampling with inclusion probability proportional to size.

    pi_i = min(1, expected_n * s_i / sum(s)); every unit is included
    independently with probability pi_i, so the realized sample size is
    random with mean sum(pi).  Certainty units (pi capped at 1) get weight 1.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.ndim != 1 or sizes.size == 0:
        raise ValidationError("sizes must be a nonempty 1-d array")
    if not np.all(sizes > 0):
        raise ValidationError("size variable must be strictly positive")
    if not 0 < expected_n <= sizes.size:
        raise ValidationError("expected_n must lie in (0, population size]")
    pi = np.minimum(1.0, expected_n * sizes / sizes.sum())
    include = rng.random(sizes.size) < pi
    idx = np.nonzero(include)[0]
    return DesignDraw(indices=idx, pi=pi[idx], weights=1.0 / pi[idx])


def informative_size(base_weight, y, shift):
    """Size variable  base_weight + shift * y  used to make the draw informative.

    shift = 0 gives a noninformative design; a resulting size <= 0 is an error.
    """
    base_weight = np.asarray(base_weight, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(base_weight <= 0):
        raise ValidationError("base weights must be strictly positive")
    size = base_weight + shift * y
    if np.any(size <= 0):
        raise ValidationError("informative size variable must stay positive")
    if size.ndim == 0:
        return float(size)
    return size


def direct_estimate(y, w=None, weighted=True):
    """Direct proportion for one area: Hajek ratio sum(w y)/sum(w) when
    weighted, plain mean otherwise.  An empty area has no direct estimate."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValidationError("direct estimate undefined for an empty area sample")
    if not weighted:
        return float(y.mean())
    if w is None:
        raise ValidationError("the weighted direct estimate requires weights")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != y.shape or not np.all(w > 0):
        raise ValidationError("one positive weight per observation is required")
    return float((w * y).sum() / w.sum())
