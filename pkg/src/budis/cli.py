"""Command-line entry points: fit, predict, simulate, features.

Every command resolves its configuration from defaults, then an optional
JSON config file (flat key/value, unknown keys rejected), then explicit
flags; validates all inputs before any compute; writes outputs to a staging
directory and renames into place only on success, so no partial output
survives a failure.  A manifest.json recording every seed, hyperparameter
and input hash accompanies each run, and reruns with identical inputs and
seed produce byte-identical outputs.

Note on the feature layer: there is no per-node bias term; instead the
complex-covariate vector is prefixed with a constant 1, so the layer sees
r = K + 1 inputs for a K-word vocabulary.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .elm import ElmLayer, elm_init, elm_transform
from .errors import NumericalError, ValidationError
from .features import (
    SpatialBasis,
    Vocabulary,
    build_vocabulary,
    indicator_matrix,
    read_adjacency_csv,
    spatial_basis,
)
from .model import BudisSpec, GibbsFit, VbFit, gibbs_fit, make_design, vb_fit
from .multinomial import fit_stick_breaking
from .population import PopulationFrame, posterior_predict_areas, posterior_predict_categories
from .sim import CsvPopulation, SimConfig, lattice_adjacency, make_synthetic_population, run_simulation

log = logging.getLogger("budis.cli")

# Seed-stream ids: the master seed is combined with one of these so each
# stage owns an independent, reproducible stream.
_STREAM_ELM = 1
_STREAM_FIT = 2
_STREAM_PREDICT = 3


@dataclass(frozen=True)
class RunConfig:
    """All tunables, with the standard defaults documented in the README."""

    seed: int = 0
    fitter: str = "vb"
    threads: int = 0  # 0 means all available cores
    vocab_size: int = 1000
    n_eigenvectors: int = 25
    hidden_nodes: int = 240
    sparsity: float = 0.10
    sigma2_beta: float = 1000.0
    ig_shape: float = 0.5
    ig_rate: float = 0.5
    gibbs_iterations: int = 2000
    gibbs_burn_in: int = 1000
    gibbs_thin: int = 1
    vb_max_iter: int = 500
    vb_tol: float = 1e-6
    predict_draws: int = 200
    predict_sampled: bool = False
    demographics: tuple = ("hispanic", "female")
    expected_n: float = 1000.0
    replicates: int = 50
    shift: float = 0.7
    synthetic_units: int = 6000
    synthetic_areas: int = 48
    synthetic_vocab: int = 1000
    synthetic_signal: float = 2.0

    def model_spec(self):
        return BudisSpec(
            sigma2_beta=self.sigma2_beta,
            ig_shape=self.ig_shape,
            ig_rate=self.ig_rate,
            gibbs_iterations=self.gibbs_iterations,
            gibbs_burn_in=self.gibbs_burn_in,
            gibbs_thin=self.gibbs_thin,
            vb_max_iter=self.vb_max_iter,
            vb_tol=self.vb_tol,
        )

    def n_jobs(self):
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


def load_config(path=None, overrides=None):
    """Defaults <- JSON config file <- CLI flag overrides."""
    values = {}
    known = {f.name for f in fields(RunConfig)}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config file {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        values.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    if "demographics" in values:
        values["demographics"] = tuple(values["demographics"])
    try:
        config = RunConfig(**values)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from None
    if config.fitter not in ("vb", "gibbs"):
        raise ValidationError(f"unknown fitter {config.fitter!r}")
    config.model_spec()  # validates the numeric hyperparameters
    return config


class StagedOutput:
    """Collects output files in a temp directory; commit() renames them into
    the real output directory, so failures leave nothing behind."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(tempfile.mkdtemp(dir=self.out_dir.parent, prefix=".staging-"))

    def path(self, name):
        return self._tmp / name

    def commit(self):
        self.out_dir.mkdir(exist_ok=True)
        for item in sorted(self._tmp.iterdir()):
            os.replace(item, self.out_dir / item.name)
        self._tmp.rmdir()

    def abort(self):
        shutil.rmtree(self._tmp, ignore_errors=True)


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(path, command, config, inputs, extra=None):
    manifest = {
        "command": command,
        "version": __version__,
        "config": {k: list(v) if isinstance(v, tuple) else v
                   for k, v in asdict(config).items()},
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    manifest.update(extra or {})
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _stream_seed(master, stream):
    """Derived 63-bit integer seed for one named stage."""
    return int(np.random.SeedSequence([int(master), stream]).generate_state(1)[0])


def _timed(stage, fn, *args, **kwargs):
    t0 = time.perf_counter()
    result = fn(*args, **kwargs)
    log.info("stage=%s elapsed_s=%.3f", stage, time.perf_counter() - t0)
    return result


# ---------------------------------------------------------------------------
# CSV ingestion

def _read_csv_rows(path):
    try:
        with open(path, newline="") as fh:
            lines = [line for line in fh if not line.startswith("#")]
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    rows = list(csv.DictReader(lines))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return rows


def _require_columns(path, rows, required):
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise ValidationError(f"{path}: missing required columns {missing}")


def _parse_int(path, row_num, name, value):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{path} row {row_num}: column {name!r} must be an integer "
                              f"(got {value!r})") from None


def _parse_float(path, row_num, name, value):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{path} row {row_num}: column {name!r} must be numeric "
                              f"(got {value!r})") from None


def _parse_indicator(path, row_num, name, value):
    if value not in ("0", "1"):
        raise ValidationError(f"{path} row {row_num}: column {name!r} must be 0 or 1 "
                              f"(got {value!r})")
    return int(value)


@dataclass
class UnitsTable:
    ids: np.ndarray
    area: np.ndarray
    cell: np.ndarray
    weight: np.ndarray
    response_raw: list
    text: list
    demographics: np.ndarray
    response_labels: tuple  # () for a 0/1 response
    z: np.ndarray  # binary 0/1, or 1-based category codes


def _read_units_csv(path, demographics):
    rows = _read_csv_rows(path)
    _require_columns(path, rows, ["id", "area", "weight", "response", "text", *demographics])
    has_cell = "cell" in rows[0]
    ids, area, cell, weight, response, text, demo = [], [], [], [], [], [], []
    for i, row in enumerate(rows, start=1):
        ids.append(_parse_int(path, i, "id", row["id"]))
        area.append(row["area"].strip())
        cell.append(row["cell"].strip() if has_cell else row["area"].strip())
        w = _parse_float(path, i, "weight", row["weight"])
        if w <= 0:
            raise ValidationError(f"{path} row {i}: weight must be positive (got {w!r})")
        weight.append(w)
        response.append(row["response"].strip())
        text.append(row["text"])
        demo.append([_parse_indicator(path, i, name, row[name].strip()) for name in demographics])
    ids = np.array(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate unit ids")

    values = set(response)
    if values <= {"0", "1"}:
        labels = ()
        z = np.array([float(v) for v in response])
    else:
        seen = []
        for v in response:
            if v not in seen:
                seen.append(v)
        labels = tuple(seen)
        code = {v: k for k, v in enumerate(labels, start=1)}
        z = np.array([code[v] for v in response], dtype=np.float64)
    return UnitsTable(
        ids=ids,
        area=np.array(area),
        cell=np.array(cell),
        weight=np.array(weight),
        response_raw=response,
        text=text,
        demographics=np.array(demo, dtype=np.float64),
        response_labels=labels,
        z=z,
    )


def _read_population_csv(path, demographics, need_response=False, need_text=False):
    rows = _read_csv_rows(path)
    required = ["id", "area", *demographics]
    if need_response:
        required += ["weight", "response"]
    if need_text:
        required += ["text"]
    _require_columns(path, rows, required)
    has_cell = "cell" in rows[0]
    ids, area, cell, demo = [], [], [], []
    weight, response, text = [], [], []
    for i, row in enumerate(rows, start=1):
        ids.append(_parse_int(path, i, "id", row["id"]))
        area.append(row["area"].strip())
        cell.append(row["cell"].strip() if has_cell else row["area"].strip())
        demo.append([_parse_indicator(path, i, name, row[name].strip()) for name in demographics])
        if need_response:
            w = _parse_float(path, i, "weight", row["weight"])
            if w <= 0:
                raise ValidationError(f"{path} row {i}: weight must be positive (got {w!r})")
            weight.append(w)
            response.append(_parse_indicator(path, i, "response", row["response"].strip()))
        if need_text:
            text.append(row["text"])
    ids = np.array(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate unit ids")
    return {
        "ids": ids,
        "area": np.array(area),
        "cell": np.array(cell),
        "demographics": np.array(demo, dtype=np.float64),
        "weight": np.array(weight, dtype=np.float64) if need_response else None,
        "response": np.array(response, dtype=np.float64) if need_response else None,
        "text": text if need_text else None,
    }


# ---------------------------------------------------------------------------
# fit

def _fit_file_name(fitter, category=None):
    suffix = "" if category is None else f"_cat{category}"
    return f"fit_{fitter}{suffix}." + ("json" if fitter == "vb" else "csv")


def _save_fit(fit, path):
    if isinstance(fit, VbFit):
        payload = {
            "mean": fit.mean.tolist(),
            "cov": fit.cov.tolist(),
            "n_linear": fit.n_linear,
            "ig_shape": fit.ig_shape,
            "ig_rate": fit.ig_rate,
            "elbo_trace": fit.elbo_trace.tolist(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")
    else:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = [f"beta_{j}" for j in range(fit.p)]
            header += [f"eta_{j}" for j in range(fit.h)]
            header += ["sigma2_eta"]
            writer.writerow(header)
            for i in range(fit.n_draws):
                row = [repr(float(v)) for v in fit.beta[i]]
                row += [repr(float(v)) for v in fit.eta[i]]
                row += [repr(float(fit.sigma2_eta[i]))]
                writer.writerow(row)


def _load_fit(path, fitter, p, h):
    if fitter == "vb":
        payload = json.loads(Path(path).read_text())
        return VbFit(
            mean=np.array(payload["mean"]),
            cov=np.array(payload["cov"]),
            n_linear=int(payload["n_linear"]),
            ig_shape=float(payload["ig_shape"]),
            ig_rate=float(payload["ig_rate"]),
            elbo_trace=np.array(payload["elbo_trace"]),
        )
    with open(path, newline="") as fh:
        body = np.array([[float(v) for v in row] for row in list(csv.reader(fh))[1:]])
    return GibbsFit(beta=body[:, :p], eta=body[:, p:p + h], sigma2_eta=body[:, -1])


def cmd_fit(args):
    config = load_config(args.config, _cli_overrides(args))
    units = _timed("read_units", _read_units_csv, args.units, config.demographics)
    adj_areas, adjacency = read_adjacency_csv(args.adjacency)
    q = min(config.n_eigenvectors, len(adj_areas))
    basis = spatial_basis(adjacency, q=q, areas=adj_areas)
    unknown_areas = sorted(set(units.area.tolist()) - set(adj_areas))
    if unknown_areas:
        raise ValidationError(f"units reference areas missing from the adjacency: {unknown_areas}")

    vocab = _timed("vocabulary", build_vocabulary, units.text, config.vocab_size)
    indicators = indicator_matrix(vocab, units.text)
    psi = np.hstack([np.ones((len(units.ids), 1)), indicators])
    X = np.hstack([np.ones((len(units.ids), 1)), units.demographics, basis.rows(units.area)])

    elm_seed = _stream_seed(config.seed, _STREAM_ELM)
    layer = elm_init(config.hidden_nodes, psi.shape[1], config.sparsity, seed=elm_seed)
    G = _timed("elm_transform", elm_transform, layer, psi)

    spec = config.model_spec()
    rng_fit = np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_FIT]))

    staged = StagedOutput(args.out)
    try:
        if units.response_labels:
            sb = _timed(
                f"fit_{config.fitter}_stick_breaking",
                fit_stick_breaking,
                units.z.astype(np.int64), X, G,
                weights=units.weight, spec=spec, fitter=config.fitter,
                rng=rng_fit, n_categories=len(units.response_labels),
            )
            for k, fit in enumerate(sb.fits, start=1):
                _save_fit(fit, staged.path(_fit_file_name(config.fitter, k)))
        else:
            data = make_design(X, G, units.z, weights=units.weight)
            if config.fitter == "vb":
                fit = _timed("fit_vb", vb_fit, data, spec)
                log.info("stage=fit_vb elbo_iters=%d final_elbo=%.6f",
                         len(fit.elbo_trace), fit.elbo_trace[-1])
            else:
                fit = _timed("fit_gibbs", gibbs_fit, data, spec, rng_fit)
            _save_fit(fit, staged.path(_fit_file_name(config.fitter)))

        vocab.to_csv(staged.path("vocabulary.csv"))
        basis.to_csv(staged.path("spatial_basis.csv"))
        layer.save(staged.path("elm_layer.json"), staged.path("elm_weights.npy"))
        np.save(staged.path("sampled_psi.npy"), psi)
        with open(staged.path("sampled_units.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "area", "cell", "weight", "response"])
            for i in range(len(units.ids)):
                writer.writerow(
                    [int(units.ids[i]), units.area[i], units.cell[i],
                     repr(float(units.weight[i])), units.response_raw[i]]
                )
        _write_manifest(
            staged.path("manifest.json"),
            "fit",
            config,
            [args.units, args.adjacency],
            extra={
                "dims": {"n": len(units.ids), "p": X.shape[1], "h": config.hidden_nodes,
                         "r": psi.shape[1], "k_vocab": len(vocab), "q": q},
                "response": {"type": "categorical" if units.response_labels else "binary",
                             "labels": list(units.response_labels)},
                "seeds": {"elm": elm_seed, "fit_stream": [config.seed, _STREAM_FIT]},
                "note": "feature layer input is [1, word indicators]; no per-node bias",
            },
        )
    except BaseException:
        staged.abort()
        raise
    staged.commit()
    log.info("stage=fit_done out=%s", args.out)
    return 0


# ---------------------------------------------------------------------------
# predict

def _load_fit_dir(fit_dir):
    fit_dir = Path(fit_dir)
    manifest_path = fit_dir / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"{fit_dir} does not contain a manifest.json")
    manifest = json.loads(manifest_path.read_text())
    config = load_config(None, {k: v for k, v in manifest["config"].items()})
    vocab = Vocabulary.from_csv(fit_dir / "vocabulary.csv")
    basis = SpatialBasis.from_csv(fit_dir / "spatial_basis.csv")
    layer = ElmLayer.load(fit_dir / "elm_layer.json", fit_dir / "elm_weights.npy")
    psi = np.load(fit_dir / "sampled_psi.npy")
    sampled = _read_csv_rows(fit_dir / "sampled_units.csv")
    dims = manifest["dims"]
    labels = tuple(manifest["response"]["labels"])
    if labels:
        fits = [
            _load_fit(fit_dir / _fit_file_name(config.fitter, k), config.fitter,
                      dims["p"], dims["h"])
            for k in range(1, len(labels))
        ]
    else:
        fits = [_load_fit(fit_dir / _fit_file_name(config.fitter), config.fitter,
                          dims["p"], dims["h"])]
    return manifest, config, vocab, basis, layer, psi, sampled, fits, labels


def cmd_predict(args):
    manifest, config, vocab, basis, layer, psi_art, sampled_rows, fits, labels = (
        _load_fit_dir(args.fit_dir)
    )
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    pop = _read_population_csv(args.population, config.demographics)

    sampled_ids = np.array([int(r["id"]) for r in sampled_rows], dtype=np.int64)
    missing = sorted(set(sampled_ids.tolist()) - set(pop["ids"].tolist()))
    if missing:
        raise ValidationError(
            f"sampled unit ids absent from the population file: {missing[:10]}"
        )
    art_index = {int(uid): i for i, uid in enumerate(sampled_ids)}
    sampled_mask = np.isin(pop["ids"], sampled_ids)
    order = [art_index[int(uid)] for uid in pop["ids"][sampled_mask]]

    if labels:
        code = {label: k for k, label in enumerate(labels, start=1)}
        try:
            z_art = np.array([code[r["response"]] for r in sampled_rows], dtype=np.float64)
        except KeyError as exc:
            raise ValidationError(f"sampled response label {exc} missing from manifest") from None
    else:
        z_art = np.array([float(r["response"]) for r in sampled_rows])
    w_art = np.array([float(r["weight"]) for r in sampled_rows])

    m = len(pop["ids"])
    y_obs = np.full(m, np.nan)
    weight = np.full(m, np.nan)
    y_obs[sampled_mask] = z_art[order]
    weight[sampled_mask] = w_art[order]

    X = np.hstack([np.ones((m, 1)), pop["demographics"], basis.rows(pop["area"])])
    frame = PopulationFrame(
        unit_id=pop["ids"],
        area=pop["area"],
        cell=pop["cell"],
        X=X,
        sampled=sampled_mask,
        y_obs=y_obs,
        weight=weight,
        psi_sampled=psi_art[order],
    )

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_PREDICT]))
    staged = StagedOutput(args.out)
    try:
        if labels:
            from .multinomial import StickBreaking

            sb = StickBreaking(n_categories=len(labels), fits=tuple(fits))
            estimates = _timed(
                "predict_categories", posterior_predict_categories,
                frame, sb, layer, config.predict_draws, rng,
                predict_sampled=config.predict_sampled,
            )
            for k, est in enumerate(estimates, start=1):
                est.to_csv(staged.path(f"area_estimates_cat{k}.csv"))
        else:
            estimates = _timed(
                "predict_areas", posterior_predict_areas,
                frame, fits[0], layer, config.predict_draws, rng,
                predict_sampled=config.predict_sampled,
            )
            estimates.to_csv(staged.path("area_estimates.csv"))
        _write_manifest(
            staged.path("manifest.json"),
            "predict",
            config,
            [args.population],
            extra={
                "fit_dir": str(args.fit_dir),
                "fit_manifest_version": manifest["version"],
                "response": manifest["response"],
                "seeds": {"predict_stream": [config.seed, _STREAM_PREDICT]},
            },
        )
    except BaseException:
        staged.abort()
        raise
    staged.commit()
    log.info("stage=predict_done out=%s", args.out)
    return 0


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args):
    config = load_config(args.config, _cli_overrides(args))
    if args.population is not None:
        if args.adjacency is None:
            raise ValidationError("simulating from a population CSV requires --adjacency")
        adj_areas, adjacency = read_adjacency_csv(args.adjacency)
        raw = _read_population_csv(args.population, config.demographics,
                                   need_response=True, need_text=True)
        unknown = sorted(set(raw["area"].tolist()) - set(adj_areas))
        if unknown:
            raise ValidationError(f"population references areas missing from the adjacency: {unknown}")
        population = CsvPopulation(
            unit_id=raw["ids"],
            area=raw["area"],
            cell=raw["cell"],
            demographics=raw["demographics"],
            base_weight=raw["weight"],
            y=raw["response"].astype(np.int64),
            text=tuple(raw["text"]),
            adjacency=adjacency,
            area_labels=tuple(a for a in adj_areas if (raw["area"] == a).any()),
        )
        inputs = [args.population, args.adjacency]
    else:
        population = _timed(
            "synthesize_population", make_synthetic_population,
            seed=config.seed,
            n_units=config.synthetic_units,
            n_areas=config.synthetic_areas,
            vocab_size=config.synthetic_vocab,
            signal=config.synthetic_signal,
        )
        inputs = []

    sim_config = SimConfig(
        replicates=config.replicates,
        expected_n=config.expected_n,
        shift=config.shift,
        vocab_size=config.vocab_size,
        n_eigenvectors=config.n_eigenvectors,
        hidden_nodes=config.hidden_nodes,
        sparsity=config.sparsity,
        fitter=config.fitter,
        predict_draws=config.predict_draws,
        predict_sampled=config.predict_sampled,
        model=config.model_spec(),
        seed=config.seed,
        n_jobs=config.n_jobs(),
    )
    report = _timed("run_simulation", run_simulation, population, sim_config)

    staged = StagedOutput(args.out)
    try:
        report.to_csv(staged.path("sim_report.csv"))
        report.estimates_to_csv(staged.path("sim_estimates.csv"))
        Path(staged.path("sim_summary.txt")).write_text(report.summary_table())
        if args.population is None:
            population.to_csv(staged.path("population.csv"))
        _write_manifest(
            staged.path("manifest.json"),
            "simulate",
            config,
            inputs,
            extra={
                "population": "synthetic" if args.population is None else "csv",
                "failures": list(report.failures),
            },
        )
    except BaseException:
        staged.abort()
        raise
    staged.commit()
    log.info("stage=simulate_done out=%s", args.out)
    return 0


# ---------------------------------------------------------------------------
# features

def cmd_features(args):
    config = load_config(args.config, _cli_overrides(args))
    units = _read_units_csv(args.units, config.demographics)
    vocab = _timed("vocabulary", build_vocabulary, units.text, config.vocab_size)
    basis = None
    inputs = [args.units]
    if args.adjacency is not None:
        adj_areas, adjacency = read_adjacency_csv(args.adjacency)
        q = min(config.n_eigenvectors, len(adj_areas))
        basis = spatial_basis(adjacency, q=q, areas=adj_areas)
        inputs.append(args.adjacency)

    staged = StagedOutput(args.out)
    try:
        vocab.to_csv(staged.path("vocabulary.csv"))
        if basis is not None:
            basis.to_csv(staged.path("spatial_basis.csv"))
        _write_manifest(staged.path("manifest.json"), "features", config, inputs,
                        extra={"k_vocab": len(vocab)})
    except BaseException:
        staged.abort()
        raise
    staged.commit()
    return 0


# ---------------------------------------------------------------------------
# argument plumbing

def _cli_overrides(args):
    return {
        "seed": getattr(args, "seed", None),
        "fitter": getattr(args, "fitter", None),
        "threads": getattr(args, "threads", None),
    }


def _add_common(parser):
    parser.add_argument("--config", default=None, help="JSON config file (flat key/value)")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--fitter", choices=("vb", "gibbs"), default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="replicate-level parallelism (0 = all cores)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="budis",
        description="Survey-weighted small area estimation with random-feature "
                    "logistic models: fit, predict, simulate, features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the model to a units CSV")
    p_fit.add_argument("--units", required=True, help="units CSV: id,area,weight,response,text,...")
    p_fit.add_argument("--adjacency", required=True, help="area adjacency CSV")
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="poststratified area estimates from a saved fit")
    p_pred.add_argument("--fit-dir", required=True, help="directory written by `budis fit`")
    p_pred.add_argument("--population", required=True, help="population CSV: id,area[,cell],demographics")
    _add_common(p_pred)
    p_pred.set_defaults(func=cmd_predict)

    p_sim = sub.add_parser("simulate", help="repeated-sampling simulation study")
    p_sim.add_argument("--population", default=None,
                       help="population CSV (omit to generate a synthetic population)")
    p_sim.add_argument("--adjacency", default=None, help="area adjacency CSV (CSV population only)")
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_feat = sub.add_parser("features", help="emit vocabulary (and spatial basis) CSVs")
    p_feat.add_argument("--units", required=True)
    p_feat.add_argument("--adjacency", default=None)
    _add_common(p_feat)
    p_feat.set_defaults(func=cmd_features)
    return parser


def main(argv=None):
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        log.error("validation error: %s", exc)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
