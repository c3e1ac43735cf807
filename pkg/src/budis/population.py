"""Population prediction: design-aware imputation of complex covariates onto
nonsampled units and poststratified aggregation to per-area estimates.

Within an imputation cell, a nonsampled unit receives the complex-covariate
vector of one of the cell's sampled units, drawn with probability
proportional to the inverse of that unit's survey weight.  A fresh
imputation is made for every posterior draw so that imputation uncertainty
propagates into the posterior predictive distribution.  All per-unit
randomness (imputation choice, response draw) comes from a counter-based
generator keyed by the unit id, so estimates do not depend on the ordering
of population records.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .elm import elm_transform
from .errors import ValidationError

__all__ = [
    "PopulationFrame",
    "AreaEstimates",
    "impute_cell_draw",
    "posterior_predict_areas",
    "posterior_predict_categories",
]

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x):
    """splitmix64 finalizer; a bijection on uint64."""
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def _unit_uniforms(base_key, draw, unit_ids, slot):
    """Uniform(0,1) variates keyed by (base_key, draw, unit id, slot)."""
    with np.errstate(over="ignore"):
        h = _mix64(unit_ids.astype(np.uint64))
        h = _mix64(h ^ np.uint64(base_key))
        h = _mix64(h ^ np.uint64(2 * draw + slot))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def impute_cell_draw(psi, weights, m, rng):
    """Resample m complex-covariate vectors from one cell's sampled units.

    Unit j is selected with probability (1/w_j) / sum_k (1/w_k); draws are
    independent with replacement.  An empty cell is a hard error: the scheme
    requires every populated cell to contain at least one sampled unit.
    """
    psi = np.asarray(psi, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if psi.ndim == 1:
        psi = psi.reshape(1, -1)
    if psi.shape[0] == 0:
        raise ValidationError("imputation cell has no sampled units")
    if weights.shape != (psi.shape[0],) or not np.all(weights > 0):
        raise ValidationError("one positive weight per sampled vector is required")
    inv = 1.0 / weights
    cdf = np.cumsum(inv / inv.sum())
    idx = np.searchsorted(cdf, rng.random(m), side="right")
    idx = np.minimum(idx, psi.shape[0] - 1)
    return psi[idx]


@dataclass(frozen=True)
class PopulationFrame:
    """All population units plus the sampled units' complex covariates.

    unit_id, area, cell, X have one entry/row per population unit; sampled
    marks the units that were observed, with y_obs and weight set for them
    (NaN elsewhere).  psi_sampled holds the complex-covariate vectors of the
    sampled units, in frame order restricted to sampled rows.  Every cell
    that contains population units must contain at least one sampled unit.
    """

    unit_id: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    cell: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    sampled: np.ndarray = field(repr=False)
    y_obs: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)
    psi_sampled: np.ndarray = field(repr=False)
    y_true: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m = self.unit_id.shape[0]
        for name in ("area", "cell", "sampled", "y_obs", "weight"):
            if getattr(self, name).shape[0] != m:
                raise ValidationError(f"{name} must have one entry per population unit")
        if self.X.shape[0] != m:
            raise ValidationError("X must have one row per population unit")
        if len(np.unique(self.unit_id)) != m:
            raise ValidationError("unit ids must be unique")
        n_s = int(self.sampled.sum())
        if self.psi_sampled.shape[0] != n_s:
            raise ValidationError("psi_sampled must have one row per sampled unit")
        if n_s:
            w = self.weight[self.sampled]
            if not np.all(np.isfinite(w)) or not np.all(w > 0):
                raise ValidationError("sampled units must carry positive weights")
            y = self.y_obs[self.sampled]
            if not np.all(np.isfinite(y)):
                raise ValidationError("sampled units must carry observed responses")
        for cell in np.unique(self.cell):
            in_cell = self.cell == cell
            if not (in_cell & self.sampled).any():
                raise ValidationError(
                    f"imputation cell {cell!r} contains population units but no sampled units"
                )

    @property
    def n_units(self):
        return self.unit_id.shape[0]


@dataclass(frozen=True)
class AreaEstimates:
    """Per-area posterior summary of the population proportion."""

    area: tuple
    mean: np.ndarray = field(repr=False)
    sd: np.ndarray = field(repr=False)
    lo95: np.ndarray = field(repr=False)
    hi95: np.ndarray = field(repr=False)
    n_pop: np.ndarray = field(repr=False)
    n_sample: np.ndarray = field(repr=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["area", "estimate", "sd", "lo95", "hi95", "n_pop", "n_sample"])
            for i, a in enumerate(self.area):
                writer.writerow(
                    [
                        a,
                        repr(float(self.mean[i])),
                        repr(float(self.sd[i])),
                        repr(float(self.lo95[i])),
                        repr(float(self.hi95[i])),
                        int(self.n_pop[i]),
                        int(self.n_sample[i]),
                    ]
                )


def _theta_draws(fit, draws, rng):
    if fit.kind == "gibbs":
        theta = fit.theta_draws(draws)
    else:
        theta = fit.theta_draws(draws, rng)
    return theta[:, : fit.p], theta[:, fit.p:]


class _Predictor:
    """Shared layout for per-draw population prediction: area bookkeeping,
    the per-cell inverse-weight tables, and the keyed feature assignment."""

    def __init__(self, frame, layer, use_features, areas):
        if areas is None:
            areas = tuple(sorted(np.unique(frame.area).tolist()))
        else:
            areas = tuple(areas)
        self.frame = frame
        self.areas = areas

        area_index = {a: i for i, a in enumerate(areas)}
        unknown = set(np.unique(frame.area).tolist()) - set(areas)
        if unknown:
            raise ValidationError(f"population contains areas outside the area list: {sorted(unknown)}")
        self.unit_area = np.array([area_index[a] for a in frame.area], dtype=np.int64)
        self.n_pop = np.bincount(self.unit_area, minlength=len(areas)).astype(np.int64)
        if np.any(self.n_pop == 0):
            empty = [areas[i] for i in np.nonzero(self.n_pop == 0)[0]]
            raise ValidationError(f"areas with zero population units: {empty}")

        self.sampled_idx = np.nonzero(frame.sampled)[0]
        self.n_sample = np.bincount(
            self.unit_area[self.sampled_idx], minlength=len(areas)
        ).astype(np.int64)

        self.use_features = use_features
        if use_features:
            if layer is None:
                raise ValidationError("a fit with random features requires the feature layer")
            if frame.psi_sampled.shape[1] != layer.r:
                raise ValidationError("sampled complex covariates do not match the feature layer")
            self.g_sampled = elm_transform(layer, frame.psi_sampled)
            self.pos_in_sampled = np.full(frame.n_units, -1, dtype=np.int64)
            self.pos_in_sampled[self.sampled_idx] = np.arange(self.sampled_idx.size)
            # Per cell: sampled rows ordered by unit id, with the 1/w CDF.
            self.cells = {}
            for cell in np.unique(frame.cell):
                rows = self.sampled_idx[frame.cell[self.sampled_idx] == cell]
                rows = rows[np.argsort(frame.unit_id[rows], kind="stable")]
                inv = 1.0 / frame.weight[rows]
                self.cells[cell] = (self.pos_in_sampled[rows], np.cumsum(inv / inv.sum()))

    def feature_rows(self, base_key, t, predict_idx):
        """Row index into psi_sampled/g_sampled for each unit to predict:
        sampled units keep their own row, nonsampled units draw one from
        their cell with probability proportional to inverse weight."""
        frame = self.frame
        rows = np.empty(predict_idx.size, dtype=np.int64)
        own = frame.sampled[predict_idx]
        rows[own] = self.pos_in_sampled[predict_idx[own]]
        imput = np.nonzero(~own)[0]
        if imput.size:
            units = predict_idx[imput]
            for cell, (g_rows, cdf) in self.cells.items():
                in_cell = np.nonzero(frame.cell[units] == cell)[0]
                if not in_cell.size:
                    continue
                u = _unit_uniforms(base_key, t, frame.unit_id[units[in_cell]], slot=0)
                j = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
                rows[imput[in_cell]] = g_rows[j]
        return rows

    def area_proportions(self, y):
        return np.bincount(self.unit_area, weights=y, minlength=len(self.areas)) / self.n_pop

    def summarize(self, props):
        n_draws = props.shape[0]
        return AreaEstimates(
            area=self.areas,
            mean=props.mean(axis=0),
            sd=props.std(axis=0, ddof=1) if n_draws > 1 else np.zeros(len(self.areas)),
            lo95=np.quantile(props, 0.025, axis=0),
            hi95=np.quantile(props, 0.975, axis=0),
            n_pop=self.n_pop,
            n_sample=self.n_sample,
        )


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def posterior_predict_areas(frame, fit, layer, draws, rng, predict_sampled=False,
                            areas=None):
    """Posterior-predictive area proportions under one fitted model.

    For each posterior coefficient draw: re-impute complex covariates for all
    nonsampled units (inverse-weight resampling within cells), push them
    through the frozen feature layer, draw Bernoulli responses from the
    implied probabilities, and average responses per area across the whole
    population.  Sampled units contribute their observed responses unless
    ``predict_sampled`` is set.  The per-draw area proportions are summarised
    into mean, SD, and an equal-tailed 95% interval.
    """
    if frame.X.shape[1] != fit.p:
        raise ValidationError("population linear covariates do not match the fit")
    pred = _Predictor(frame, layer, use_features=fit.h > 0, areas=areas)
    beta, eta = _theta_draws(fit, draws, rng)
    n_draws = beta.shape[0]
    base_key = int(rng.integers(2**63))

    lin_base = frame.X @ beta.T  # (m, n_draws)
    if pred.use_features:
        feat_lin = pred.g_sampled @ eta.T  # (n_s, n_draws)

    if predict_sampled:
        predict_idx = np.arange(frame.n_units)
    else:
        predict_idx = np.nonzero(~frame.sampled)[0]

    y_draw = np.empty(frame.n_units)
    props = np.empty((n_draws, len(pred.areas)))
    for t in range(n_draws):
        y_draw[:] = 0.0
        if not predict_sampled and pred.sampled_idx.size:
            y_draw[pred.sampled_idx] = frame.y_obs[pred.sampled_idx]
        if predict_idx.size:
            lin = lin_base[predict_idx, t]
            if pred.use_features:
                rows = pred.feature_rows(base_key, t, predict_idx)
                lin = lin + feat_lin[rows, t]
            u = _unit_uniforms(base_key, t, frame.unit_id[predict_idx], slot=1)
            y_draw[predict_idx] = (u < _sigmoid(lin)).astype(np.float64)
        props[t] = pred.area_proportions(y_draw)
    return pred.summarize(props)


def posterior_predict_categories(frame, fits, layer, draws, rng,
                                 predict_sampled=False, areas=None):
    """Posterior-predictive per-category area proportions for a categorical
    response fit as K-1 stick-breaking conditionals.

    Every conditional contributes its own coefficient draws; within a draw,
    each predicted unit gets one imputed covariate assignment shared across
    the conditionals, the conditionals are chained into category
    probabilities, and a category is sampled.  Sampled units contribute
    their observed category unless ``predict_sampled`` is set.  Returns one
    AreaEstimates per category, in category order.
    """
    sb = fits
    k_minus_1 = len(sb.fits)
    n_cat = sb.n_categories
    first = sb.fits[0]
    if frame.X.shape[1] != first.p:
        raise ValidationError("population linear covariates do not match the fit")
    pred = _Predictor(frame, layer, use_features=first.h > 0, areas=areas)

    draws_by_fit = [_theta_draws(f, draws, rng) for f in sb.fits]
    n_draws = min(b.shape[0] for b, _ in draws_by_fit)
    base_key = int(rng.integers(2**63))

    lin_base = [frame.X @ b.T for b, _ in draws_by_fit]          # each (m, D)
    if pred.use_features:
        feat_lin = [pred.g_sampled @ e.T for _, e in draws_by_fit]  # each (n_s, D)

    if predict_sampled:
        predict_idx = np.arange(frame.n_units)
    else:
        predict_idx = np.nonzero(~frame.sampled)[0]

    props = np.empty((n_draws, n_cat, len(pred.areas)))
    cat_draw = np.empty(frame.n_units, dtype=np.int64)
    for t in range(n_draws):
        cat_draw[:] = 0
        if not predict_sampled and pred.sampled_idx.size:
            cat_draw[pred.sampled_idx] = frame.y_obs[pred.sampled_idx].astype(np.int64)
        if predict_idx.size:
            if pred.use_features:
                rows = pred.feature_rows(base_key, t, predict_idx)
            # Chain conditional probabilities into the category simplex.
            prob = np.empty((predict_idx.size, n_cat))
            stick = np.ones(predict_idx.size)
            for k in range(k_minus_1):
                lin = lin_base[k][predict_idx, t]
                if pred.use_features:
                    lin = lin + feat_lin[k][rows, t]
                ptilde = _sigmoid(lin)
                prob[:, k] = ptilde * stick
                stick = stick * (1.0 - ptilde)
            prob[:, -1] = stick
            u = _unit_uniforms(base_key, t, frame.unit_id[predict_idx], slot=1)
            cdf = np.cumsum(prob, axis=1)
            chosen = (u[:, None] > cdf).sum(axis=1) + 1
            cat_draw[predict_idx] = np.minimum(chosen, n_cat)
        for k in range(1, n_cat + 1):
            props[t, k - 1] = pred.area_proportions((cat_draw == k).astype(np.float64))
    return [pred.summarize(props[:, k]) for k in range(n_cat)]
