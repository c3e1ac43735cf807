"""Simulation-study harness: treat a base dataset as the population, draw
repeated informative samples, fit the full model and its no-text
counterpart, and score four per-area estimators.

Estimators, per area and replicate:
  BUDIS     - weighted pseudo-likelihood fit with the random-feature text
              block, aggregated by population posterior prediction.
  PLLR      - the same fit with the text/feature block removed (h = 0).
  Direct    - Hajek weighted mean of the area's sampled responses.
  UW Direct - unweighted mean of the area's sampled responses.

Scoring conventions (the aggregation Table-style reports leave implicit):
MSE is averaged over all (area, replicate) pairs; squared bias averages,
over areas, the squared error of the per-area mean estimate across
replicates.  Areas with no sampled units in a replicate yield missing
direct estimates, excluded pairwise with counts reported.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .elm import elm_init, elm_transform
from .errors import ValidationError
from .features import build_vocabulary, indicator_matrix, spatial_basis
from .model import BudisSpec, gibbs_fit, make_design, vb_fit
from .population import PopulationFrame, posterior_predict_areas
from .survey import direct_estimate, informative_size, poisson_pps_sample

__all__ = [
    "ESTIMATORS",
    "CsvPopulation",
    "SimConfig",
    "SimReport",
    "SyntheticPopulation",
    "make_synthetic_population",
    "lattice_adjacency",
    "prepare_population",
    "run_replicate",
    "run_simulation",
    "score",
]

log = logging.getLogger("budis.sim")

ESTIMATORS = ("BUDIS", "PLLR", "Direct", "UW Direct")


@dataclass(frozen=True)
class SimConfig:
    """Harness configuration; replicate r uses the seed stream (seed, r)."""

    replicates: int = 50
    expected_n: float = 1000.0
    shift: float = 0.7
    vocab_size: int = 1000
    n_eigenvectors: int = 25
    hidden_nodes: int = 240
    sparsity: float = 0.10
    fitter: str = "vb"
    predict_draws: int = 200
    predict_sampled: bool = False
    estimators: tuple = ESTIMATORS
    model: BudisSpec = field(default_factory=BudisSpec)
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        if self.fitter not in ("vb", "gibbs"):
            raise ValidationError(f"unknown fitter {self.fitter!r}")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ValidationError(f"unknown estimators: {unknown}")


def lattice_adjacency(n_areas):
    """Rook-neighbour adjacency on the most square rows x cols grid with
    n_areas nodes; a stand-in when no real area adjacency is supplied."""
    rows = int(np.sqrt(n_areas))
    while n_areas % rows:
        rows -= 1
    cols = n_areas // rows
    adj = np.zeros((n_areas, n_areas))
    for i in range(rows):
        for j in range(cols):
            k = i * cols + j
            if j + 1 < cols:
                adj[k, k + 1] = adj[k + 1, k] = 1.0
            if i + 1 < rows:
                adj[k, k + cols] = adj[k + cols, k] = 1.0
    return adj


@dataclass(frozen=True)
class SyntheticPopulation:
    """A generated finite population with known outcomes.

    words is the (M, V) 0/1 word-presence matrix; texts() renders it as
    space-joined synthetic tokens ("w0003 w0101 ...") so the text pipeline
    can run end to end.  params records every generation input.
    """

    unit_id: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    cell: np.ndarray = field(repr=False)
    hispanic: np.ndarray = field(repr=False)
    female: np.ndarray = field(repr=False)
    base_weight: np.ndarray = field(repr=False)
    words: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    adjacency: np.ndarray = field(repr=False)
    area_labels: tuple
    params: dict = field(repr=False)

    @property
    def n_units(self):
        return self.unit_id.shape[0]

    @property
    def demographics(self):
        return np.column_stack([self.hispanic, self.female]).astype(np.float64)

    def texts(self):
        width = len(str(self.words.shape[1]))
        names = [f"w{j:0{width}d}" for j in range(self.words.shape[1])]
        out = []
        for row in self.words:
            out.append(" ".join(names[j] for j in np.nonzero(row)[0]))
        return out

    def truth_by_area(self):
        """Population proportion of the outcome per area label."""
        truth = np.empty(len(self.area_labels))
        for i, a in enumerate(self.area_labels):
            truth[i] = self.y[self.area == a].mean()
        return truth

    def to_csv(self, path):
        """Population CSV with a '#'-prefixed header recording every
        generation parameter; identical inputs produce identical bytes."""
        with open(path, "w", newline="") as fh:
            for key in sorted(self.params):
                fh.write(f"# {key}={self.params[key]!r}\n")
            writer = csv.writer(fh)
            writer.writerow(["id", "area", "cell", "hispanic", "female", "weight",
                             "response", "text"])
            texts = self.texts()
            for i in range(self.n_units):
                writer.writerow(
                    [
                        int(self.unit_id[i]),
                        self.area[i],
                        self.cell[i],
                        int(self.hispanic[i]),
                        int(self.female[i]),
                        repr(float(self.base_weight[i])),
                        int(self.y[i]),
                        texts[i],
                    ]
                )


def make_synthetic_population(seed, n_units=6000, n_areas=48, vocab_size=1000,
                              signal=2.0, adjacency=None, area_texture=0.8):
    """Generate a finite population with informative-design ingredients.

    Area intercepts are spatially smooth (a low-frequency combination of the
    adjacency eigenvectors), demographics are Bernoulli indicators with small
    main effects, base weights are log-normal, and word presences have
    decreasing marginal rates.  A non-spatial per-area latent
    ("local climate", strength ``area_texture``) raises or lowers the
    prevalence of a handful of signal words, and the outcome logit gains
    ``signal`` times a sum of centered two-word interaction indicators built
    from those words.  The text therefore carries area-level structure that
    neither the demographics nor the smooth spatial basis can absorb, which
    is exactly the information a no-text model must do without.
    """
    if n_units < n_areas:
        raise ValidationError("need at least one unit per area")
    rng = np.random.default_rng(seed)
    if adjacency is None:
        adjacency = lattice_adjacency(n_areas)
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.shape != (n_areas, n_areas):
        raise ValidationError("adjacency must be n_areas x n_areas")
    area_labels = tuple(f"A{i + 1:02d}" for i in range(n_areas))

    basis = spatial_basis(adjacency, q=min(5, n_areas), areas=area_labels)
    smooth_coef = rng.normal(0.0, 1.0, size=basis.q)
    area_effect = basis.vectors @ smooth_coef
    area_effect = 0.7 * (area_effect - area_effect.mean()) / max(area_effect.std(), 1e-12)
    climate = rng.normal(0.0, 1.0, size=n_areas)

    # Uneven area sizes, with every area guaranteed at least one unit.
    raw = rng.lognormal(0.0, 0.6, size=n_areas)
    area_of_unit = rng.choice(n_areas, size=n_units - n_areas, p=raw / raw.sum())
    area_of_unit = np.concatenate([np.arange(n_areas), area_of_unit])

    hispanic = (rng.random(n_units) < 0.15).astype(np.int64)
    female = (rng.random(n_units) < 0.5).astype(np.int64)
    base_weight = rng.lognormal(0.0, 0.5, size=n_units)

    word_rates = np.clip(0.5 * (np.arange(1, vocab_size + 1)) ** -0.55, 0.02, None)
    rate_matrix = np.broadcast_to(word_rates, (n_units, vocab_size)).copy()

    pair_pool = np.arange(1, min(vocab_size, 26))
    flat = rng.permutation(pair_pool)
    pairs = []
    for i in range(min(6, flat.size // 2)):
        pairs.append((int(flat[2 * i]), int(flat[2 * i + 1])))
    pair_signs = [1.0 if i % 2 == 0 else -1.0 for i in range(len(pairs))]
    if pairs:
        # Local climate tilts the signal-word frequencies on the logit scale,
        # in the direction of each pair's contribution, so the per-area mean
        # of the text term genuinely varies with the (non-spatial) climate.
        tilt = area_texture * climate[area_of_unit]
        for (a, b), sign in zip(pairs, pair_signs):
            for j in (a, b):
                base_logit = np.log(word_rates[j] / (1.0 - word_rates[j]))
                rate_matrix[:, j] = 1.0 / (1.0 + np.exp(-(base_logit + sign * tilt)))
    words = (rng.random((n_units, vocab_size)) < rate_matrix).astype(np.int8)

    text_term = np.zeros(n_units)
    for (a, b), sign in zip(pairs, pair_signs):
        inter = (words[:, a] * words[:, b]).astype(np.float64)
        text_term += sign * (inter - inter.mean())

    logit = (
        area_effect[area_of_unit]
        + 0.3 * hispanic
        - 0.2 * female
        + signal * text_term
    )
    y = (rng.random(n_units) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)

    area = np.array([area_labels[i] for i in area_of_unit])
    params = {
        "seed": int(seed),
        "n_units": int(n_units),
        "n_areas": int(n_areas),
        "vocab_size": int(vocab_size),
        "signal": float(signal),
        "area_texture": float(area_texture),
        "signal_pairs": [(int(a), int(b)) for a, b in pairs],
        "word_rate_law": "min(0.5*rank^-0.55, clipped at 0.02)",
        "demographic_effects": {"hispanic": 0.3, "female": -0.2},
        "area_effect_sd": 0.7,
        "base_weight_law": "lognormal(0, 0.5)",
    }
    return SyntheticPopulation(
        unit_id=np.arange(n_units, dtype=np.int64),
        area=area,
        cell=area.copy(),
        hispanic=hispanic,
        female=female,
        base_weight=base_weight,
        words=words,
        y=y,
        adjacency=adjacency,
        area_labels=area_labels,
        params=params,
    )


@dataclass(frozen=True)
class CsvPopulation:
    """A population loaded from file rather than generated; same interface
    as SyntheticPopulation where the harness needs it."""

    unit_id: np.ndarray = field(repr=False)
    area: np.ndarray = field(repr=False)
    cell: np.ndarray = field(repr=False)
    demographics: np.ndarray = field(repr=False)
    base_weight: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    text: tuple = field(repr=False)
    adjacency: np.ndarray = field(repr=False)
    area_labels: tuple = ()

    @property
    def n_units(self):
        return self.unit_id.shape[0]

    def texts(self):
        return list(self.text)

    def truth_by_area(self):
        truth = np.empty(len(self.area_labels))
        for i, a in enumerate(self.area_labels):
            truth[i] = self.y[self.area == a].mean()
        return truth


@dataclass(frozen=True)
class PreparedPopulation:
    """Population with covariate blocks precomputed once per simulation."""

    population: SyntheticPopulation
    X: np.ndarray = field(repr=False)      # (M, p) linear covariates
    psi: np.ndarray = field(repr=False)    # (M, r) complex covariates incl. leading 1
    truth: np.ndarray = field(repr=False)  # (J,) per-area outcome proportions


def prepare_population(population, config):
    """Build the linear and complex covariate blocks for every unit."""
    q = min(config.n_eigenvectors, len(population.area_labels))
    basis = spatial_basis(population.adjacency, q=q, areas=population.area_labels)
    texts = population.texts()
    vocab = build_vocabulary(texts, config.vocab_size)
    indicators = indicator_matrix(vocab, texts)
    X = np.hstack(
        [
            np.ones((population.n_units, 1)),
            population.demographics,
            basis.rows(population.area),
        ]
    )
    # The feature layer gets a leading constant instead of per-node biases.
    psi = np.hstack([np.ones((population.n_units, 1)), indicators])
    return PreparedPopulation(
        population=population, X=X, psi=psi, truth=population.truth_by_area()
    )


def _replicate_seed(master_seed, r, retry=0):
    return np.random.SeedSequence([int(master_seed), int(r), int(retry)])


def _fit_one(X, G, z, weights, spec, fitter, rng):
    data = make_design(X, G, z, weights=weights)
    if fitter == "gibbs":
        return gibbs_fit(data, spec, rng)
    return vb_fit(data, spec)


def run_replicate(prepared, config, r, retry=0):
    """One replicate: informative sample, two model fits, four estimator rows.

    Returns an (n_areas, 4) array ordered as ESTIMATORS, with NaN for areas
    that received no sampled units (direct estimators only).
    """
    pop = prepared.population
    n_areas = len(pop.area_labels)
    seed_seq = _replicate_seed(config.seed, r, retry)
    rng_sample, rng_elm, rng_fit, rng_pred = [
        np.random.default_rng(s) for s in seed_seq.spawn(4)
    ]

    sizes = informative_size(pop.base_weight, pop.y, config.shift)
    draw = poisson_pps_sample(sizes, config.expected_n, rng_sample)
    idx = draw.indices
    z = pop.y[idx].astype(np.float64)

    layer = elm_init(
        config.hidden_nodes,
        prepared.psi.shape[1],
        config.sparsity,
        seed=int(rng_elm.integers(2**31)),
    )
    G = elm_transform(layer, prepared.psi[idx])

    t0 = time.perf_counter()
    budis = _fit_one(prepared.X[idx], G, z, draw.weights, config.model, config.fitter,
                     rng_fit)
    t1 = time.perf_counter()
    pllr = _fit_one(prepared.X[idx], None, z, draw.weights, config.model, config.fitter,
                    rng_fit)
    t2 = time.perf_counter()
    log.info(
        "replicate=%d n=%d fitter=%s budis_fit_s=%.3f pllr_fit_s=%.3f",
        r, idx.size, config.fitter, t1 - t0, t2 - t1,
    )

    y_obs = np.full(pop.n_units, np.nan)
    y_obs[idx] = z
    weight = np.full(pop.n_units, np.nan)
    weight[idx] = draw.weights
    sampled = np.zeros(pop.n_units, dtype=bool)
    sampled[idx] = True
    frame = PopulationFrame(
        unit_id=pop.unit_id,
        area=pop.area,
        cell=pop.cell,
        X=prepared.X,
        sampled=sampled,
        y_obs=y_obs,
        weight=weight,
        psi_sampled=prepared.psi[sampled],
        y_true=pop.y.astype(np.float64),
    )

    out = np.full((n_areas, len(ESTIMATORS)), np.nan)
    est_budis = posterior_predict_areas(
        frame, budis, layer, config.predict_draws, rng_pred,
        predict_sampled=config.predict_sampled, areas=pop.area_labels,
    )
    est_pllr = posterior_predict_areas(
        frame, pllr, None, config.predict_draws, rng_pred,
        predict_sampled=config.predict_sampled, areas=pop.area_labels,
    )
    out[:, 0] = est_budis.mean
    out[:, 1] = est_pllr.mean
    for i, a in enumerate(pop.area_labels):
        in_area = pop.area[idx] == a
        if in_area.any():
            out[i, 2] = direct_estimate(z[in_area], draw.weights[in_area], weighted=True)
            out[i, 3] = direct_estimate(z[in_area], weighted=False)
    return out


def _run_replicate_guarded(prepared, config, r):
    try:
        return r, run_replicate(prepared, config, r), None
    except Exception as exc:  # noqa: BLE001 - replicate isolation is the point
        log.warning("replicate=%d failed (%s); retrying with perturbed seed", r, exc)
        try:
            return r, run_replicate(prepared, config, r, retry=1), None
        except Exception as exc2:  # noqa: BLE001
            log.error("replicate=%d failed twice; reporting failure (%s)", r, exc2)
            return r, None, f"{type(exc2).__name__}: {exc2}"


@dataclass(frozen=True)
class SimReport:
    """Scored simulation: MSE and squared bias per estimator, with the raw
    per-replicate estimates retained for audit."""

    estimators: tuple
    mse: np.ndarray = field(repr=False)
    bias_sq: np.ndarray = field(repr=False)
    n_pairs: np.ndarray = field(repr=False)
    n_missing: np.ndarray = field(repr=False)
    estimates: np.ndarray = field(repr=False)  # (R, J, E) with NaN for missing
    truth: np.ndarray = field(repr=False)
    area_labels: tuple
    failures: tuple = ()

    def summary_table(self):
        lines = [
            "MSE averaged over (area, replicate) pairs; Bias^2 over areas of the",
            "replicate-mean estimate. Missing direct estimates excluded pairwise.",
            "",
            f"{'Estimator':<12}{'MSE':>12}{'Bias^2':>12}{'pairs':>8}{'missing':>9}",
        ]
        for j, name in enumerate(self.estimators):
            lines.append(
                f"{name:<12}{self.mse[j]:>12.4e}{self.bias_sq[j]:>12.4e}"
                f"{self.n_pairs[j]:>8d}{self.n_missing[j]:>9d}"
            )
        if self.failures:
            lines.append("")
            lines.append(f"failed replicates: {len(self.failures)}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "mse", "bias_sq", "n_pairs", "n_missing"])
            for j, name in enumerate(self.estimators):
                writer.writerow(
                    [name, repr(float(self.mse[j])), repr(float(self.bias_sq[j])),
                     int(self.n_pairs[j]), int(self.n_missing[j])]
                )

    def estimates_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replicate", "area", "estimator", "estimate", "truth"])
            n_rep, n_area, _ = self.estimates.shape
            for r in range(n_rep):
                for i in range(n_area):
                    for j, name in enumerate(self.estimators):
                        value = self.estimates[r, i, j]
                        writer.writerow(
                            [r, self.area_labels[i], name,
                             "" if np.isnan(value) else repr(float(value)),
                             repr(float(self.truth[i]))]
                        )


def score(estimates, truth, estimators=ESTIMATORS, area_labels=None, failures=()):
    """MSE and squared bias across replicates and areas.

    estimates: (R, J, E) array, NaN marking missing (area, replicate) pairs.
    MSE averages squared errors over all available pairs; squared bias first
    averages each area's estimates over the replicates where they exist,
    then averages the squared deviation from truth over areas.
    """
    estimates = np.asarray(estimates, dtype=np.float64)
    if estimates.ndim != 3:
        raise ValidationError("estimates must be (replicates, areas, estimators)")
    n_rep, n_area, n_est = estimates.shape
    if n_rep == 0:
        raise ValidationError("no successful replicates to score")
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != (n_area,):
        raise ValidationError("need one truth value per area")
    if area_labels is None:
        area_labels = tuple(str(i) for i in range(n_area))

    mse = np.empty(n_est)
    bias_sq = np.empty(n_est)
    n_pairs = np.empty(n_est, dtype=np.int64)
    n_missing = np.empty(n_est, dtype=np.int64)
    for j in range(n_est):
        err = estimates[:, :, j] - truth[None, :]
        ok = ~np.isnan(err)
        n_pairs[j] = int(ok.sum())
        n_missing[j] = err.size - n_pairs[j]
        if not n_pairs[j]:
            raise ValidationError(f"estimator {estimators[j]!r} has no estimates at all")
        mse[j] = float(np.sum(np.where(ok, err**2, 0.0)) / n_pairs[j])
        counts = ok.sum(axis=0)
        sums = np.sum(np.where(ok, estimates[:, :, j], 0.0), axis=0)
        has_any = counts > 0
        area_mean = sums[has_any] / counts[has_any]
        bias_sq[j] = float(np.mean((area_mean - truth[has_any]) ** 2))
    return SimReport(
        estimators=tuple(estimators),
        mse=mse,
        bias_sq=bias_sq,
        n_pairs=n_pairs,
        n_missing=n_missing,
        estimates=estimates,
        truth=truth,
        area_labels=tuple(area_labels),
        failures=tuple(failures),
    )


def run_simulation(population, config):
    """Run all replicates (optionally in parallel) and score the estimators."""
    prepared = prepare_population(population, config)
    t0 = time.perf_counter()
    if config.n_jobs == 1:
        results = [_run_replicate_guarded(prepared, config, r)
                   for r in range(config.replicates)]
    else:
        results = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_replicate_guarded)(prepared, config, r)
            for r in range(config.replicates)
        )
    log.info("replicates=%d elapsed_s=%.3f", config.replicates, time.perf_counter() - t0)
    results.sort(key=lambda item: item[0])
    good = [est for _, est, err in results if err is None]
    failures = [(r, err) for r, _, err in results if err is not None]
    if not good:
        raise ValidationError("all replicates failed")
    estimates = np.stack(good)
    keep = [ESTIMATORS.index(e) for e in config.estimators]
    return score(
        estimates[:, :, keep],
        prepared.truth,
        estimators=config.estimators,
        area_labels=population.area_labels,
        failures=failures,
    )
