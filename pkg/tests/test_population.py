"""Imputation law, population posterior prediction, order invariance."""

import numpy as np
import pytest
from scipy import stats

from budis import (
    AreaEstimates,
    GibbsFit,
    PopulationFrame,
    ValidationError,
    elm_init,
    elm_transform,
    impute_cell_draw,
    posterior_predict_areas,
)
from budis.population import _unit_uniforms, posterior_predict_categories
from budis.multinomial import StickBreaking


class TestImputeCellDraw:
    def test_single_support_point(self):
        psi = np.array([[1.0, 2.0]])
        out = impute_cell_draw(psi, np.array([3.0]), 5, np.random.default_rng(0))
        np.testing.assert_array_equal(out, np.tile([1.0, 2.0], (5, 1)))

    def test_inverse_weight_probabilities(self):
        # weights (1, 3) -> selection probabilities (0.75, 0.25)
        psi = np.array([[1.0], [2.0]])
        rng = np.random.default_rng(1)
        out = impute_cell_draw(psi, np.array([1.0, 3.0]), 100_000, rng)
        freq = (out[:, 0] == 1.0).mean()
        se = np.sqrt(0.75 * 0.25 / 100_000)
        assert abs(freq - 0.75) <= 3 * se

    def test_equal_weights_uniform(self):
        k = 6
        psi = np.eye(k)
        rng = np.random.default_rng(2)
        out = impute_cell_draw(psi, np.ones(k), 60_000, rng)
        counts = out.sum(axis=0)
        chi2 = ((counts - 10_000) ** 2 / 10_000).sum()
        assert stats.chi2.sf(chi2, k - 1) > 0.01

    def test_empty_cell_is_hard_error(self):
        with pytest.raises(ValidationError):
            impute_cell_draw(np.zeros((0, 2)), np.zeros(0), 3, np.random.default_rng(0))

    def test_rejects_bad_weights(self):
        with pytest.raises(ValidationError):
            impute_cell_draw(np.ones((2, 1)), np.array([1.0, -1.0]), 3,
                             np.random.default_rng(0))


def _toy_frame(m=24, seed=0, n_cells=2, p=2, r=3, sampled_every=3):
    rng = np.random.default_rng(seed)
    unit_id = np.arange(m, dtype=np.int64) + 100
    area = np.array([f"A{i % 2}" for i in range(m)])
    cell = np.array([f"C{i % n_cells}" for i in range(m)])
    X = np.hstack([np.ones((m, 1)), rng.normal(size=(m, p - 1))])
    sampled = np.zeros(m, dtype=bool)
    sampled[::sampled_every] = True
    y_obs = np.full(m, np.nan)
    y_obs[sampled] = (rng.random(sampled.sum()) < 0.5).astype(float)
    weight = np.full(m, np.nan)
    weight[sampled] = rng.lognormal(0, 0.4, sampled.sum()) + 0.5
    psi_sampled = rng.normal(size=(int(sampled.sum()), r))
    return PopulationFrame(
        unit_id=unit_id, area=area, cell=cell, X=X, sampled=sampled,
        y_obs=y_obs, weight=weight, psi_sampled=psi_sampled,
    )


def _constant_fit(n_draws, p, h, value=0.0):
    return GibbsFit(
        beta=np.full((n_draws, p), value),
        eta=np.full((n_draws, h), value),
        sigma2_eta=np.ones(n_draws),
    )


class TestPosteriorPredict:
    def test_zero_coefficients_give_half(self):
        frame = _toy_frame(m=4000, sampled_every=5)
        layer = elm_init(5, 3, seed=1)
        fit = _constant_fit(40, 2, 5)
        est = posterior_predict_areas(frame, fit, layer, draws=40,
                                      rng=np.random.default_rng(3),
                                      predict_sampled=True)
        # every unit is Bernoulli(1/2): area means concentrate near 0.5
        assert np.abs(est.mean - 0.5).max() < 0.03

    def test_fully_sampled_frame_returns_observed_means(self):
        frame = _toy_frame(m=12, sampled_every=1)
        layer = elm_init(4, 3, seed=2)
        fit = _constant_fit(7, 2, 4, value=0.3)
        est = posterior_predict_areas(frame, fit, layer, draws=7,
                                      rng=np.random.default_rng(4))
        for i, a in enumerate(est.area):
            observed = frame.y_obs[frame.area == a].mean()
            assert est.mean[i] == observed
        np.testing.assert_array_equal(est.sd, 0.0)
        np.testing.assert_array_equal(est.lo95, est.hi95)

    def test_matches_exhaustive_small_instance_oracle(self):
        """12 units, 2 areas, 2 cells, 3 retained draws: replay the keyed
        uniform stream and recompute every step naively."""
        frame = _toy_frame(m=12, seed=5, sampled_every=3)
        layer = elm_init(4, 3, seed=6)
        rng_draws = np.random.default_rng(77)
        fit = GibbsFit(beta=rng_draws.normal(size=(3, 2)),
                       eta=rng_draws.normal(size=(3, 4)),
                       sigma2_eta=np.ones(3))
        seed = 31
        est = posterior_predict_areas(frame, fit, layer, draws=3,
                                      rng=np.random.default_rng(seed))

        base_key = int(np.random.default_rng(seed).integers(2**63))
        areas = sorted(set(frame.area))
        prop = np.zeros((3, 2))
        for t in range(3):
            y = {}
            for i in range(12):
                uid = int(frame.unit_id[i])
                if frame.sampled[i]:
                    y[uid] = frame.y_obs[i]
                    continue
                # imputation: cell members sorted by unit id, inverse-weight cdf
                rows = [j for j in range(12)
                        if frame.sampled[j] and frame.cell[j] == frame.cell[i]]
                rows.sort(key=lambda j: frame.unit_id[j])
                inv = np.array([1.0 / frame.weight[j] for j in rows])
                cdf = np.cumsum(inv / inv.sum())
                u0 = _unit_uniforms(base_key, t, np.array([uid], dtype=np.int64), 0)[0]
                pick = rows[int(np.searchsorted(cdf, u0, side="right"))]
                psi = frame.psi_sampled[int(np.nonzero(
                    np.nonzero(frame.sampled)[0] == pick)[0][0])]
                g = elm_transform(layer, psi)
                lin = frame.X[i] @ fit.beta[t] + g @ fit.eta[t]
                p_i = 1.0 / (1.0 + np.exp(-lin))
                u1 = _unit_uniforms(base_key, t, np.array([uid], dtype=np.int64), 1)[0]
                y[uid] = 1.0 if u1 < p_i else 0.0
            for k, a in enumerate(areas):
                uids = [int(frame.unit_id[i]) for i in range(12) if frame.area[i] == a]
                prop[t, k] = np.mean([y[u] for u in uids])

        np.testing.assert_allclose(est.mean, prop.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(est.sd, prop.std(axis=0, ddof=1), atol=1e-12)
        np.testing.assert_allclose(est.lo95, np.quantile(prop, 0.025, axis=0), atol=1e-12)

    def test_invariant_to_record_ordering(self):
        frame = _toy_frame(m=30, seed=8, sampled_every=3)
        layer = elm_init(4, 3, seed=9)
        fit = GibbsFit(beta=np.random.default_rng(1).normal(size=(5, 2)),
                       eta=np.random.default_rng(2).normal(size=(5, 4)),
                       sigma2_eta=np.ones(5))
        est_a = posterior_predict_areas(frame, fit, layer, draws=5,
                                        rng=np.random.default_rng(55))

        perm = np.random.default_rng(10).permutation(30)
        sampled_perm = frame.sampled[perm]
        pos = np.nonzero(frame.sampled)[0]
        art = {int(frame.unit_id[j]): frame.psi_sampled[k] for k, j in enumerate(pos)}
        psi_perm = np.array([art[int(u)] for u in frame.unit_id[perm][sampled_perm]])
        shuffled = PopulationFrame(
            unit_id=frame.unit_id[perm], area=frame.area[perm], cell=frame.cell[perm],
            X=frame.X[perm], sampled=sampled_perm, y_obs=frame.y_obs[perm],
            weight=frame.weight[perm], psi_sampled=psi_perm,
        )
        est_b = posterior_predict_areas(shuffled, fit, layer, draws=5,
                                        rng=np.random.default_rng(55))
        np.testing.assert_array_equal(est_a.mean, est_b.mean)
        np.testing.assert_array_equal(est_a.sd, est_b.sd)

    def test_estimates_stay_in_unit_interval(self):
        frame = _toy_frame(m=60, seed=12, sampled_every=5)
        layer = elm_init(6, 3, seed=13)
        fit = GibbsFit(beta=np.random.default_rng(3).normal(size=(20, 2), scale=3),
                       eta=np.random.default_rng(4).normal(size=(20, 6), scale=3),
                       sigma2_eta=np.ones(20))
        est = posterior_predict_areas(frame, fit, layer, draws=20,
                                      rng=np.random.default_rng(14))
        for arr in (est.mean, est.lo95, est.hi95):
            assert arr.min() >= 0.0
            assert arr.max() <= 1.0
        assert np.all(est.lo95 <= est.hi95)

    def test_unknown_area_in_explicit_list(self):
        frame = _toy_frame()
        layer = elm_init(4, 3, seed=2)
        fit = _constant_fit(3, 2, 4)
        with pytest.raises(ValidationError):
            posterior_predict_areas(frame, fit, layer, draws=3,
                                    rng=np.random.default_rng(0),
                                    areas=("A0", "A1", "A9"))

    def test_cell_without_sampled_units_rejected_at_construction(self):
        frame = _toy_frame(m=12, sampled_every=3)
        bad_cell = frame.cell.copy()
        bad_cell[~frame.sampled] = "orphan"
        with pytest.raises(ValidationError):
            PopulationFrame(
                unit_id=frame.unit_id, area=frame.area, cell=bad_cell, X=frame.X,
                sampled=frame.sampled, y_obs=frame.y_obs, weight=frame.weight,
                psi_sampled=frame.psi_sampled,
            )

    def test_csv_export(self, tmp_path):
        est = AreaEstimates(
            area=("A0",), mean=np.array([0.5]), sd=np.array([0.1]),
            lo95=np.array([0.3]), hi95=np.array([0.7]),
            n_pop=np.array([10]), n_sample=np.array([4]),
        )
        est.to_csv(tmp_path / "est.csv")
        text = (tmp_path / "est.csv").read_text()
        assert text.splitlines()[0] == "area,estimate,sd,lo95,hi95,n_pop,n_sample"
        assert "0.5" in text


class TestCategoricalPredict:
    def test_probabilities_partition_population(self):
        frame = _toy_frame(m=40, seed=20, sampled_every=3)
        # observed responses become categories 1..3
        y_obs = frame.y_obs.copy()
        y_obs[frame.sampled] = np.random.default_rng(0).integers(1, 4, int(frame.sampled.sum()))
        frame = PopulationFrame(
            unit_id=frame.unit_id, area=frame.area, cell=frame.cell, X=frame.X,
            sampled=frame.sampled, y_obs=y_obs, weight=frame.weight,
            psi_sampled=frame.psi_sampled,
        )
        layer = elm_init(4, 3, seed=21)
        rngf = np.random.default_rng(22)
        fits = tuple(
            GibbsFit(beta=rngf.normal(size=(6, 2)), eta=rngf.normal(size=(6, 4)),
                     sigma2_eta=np.ones(6))
            for _ in range(2)
        )
        sb = StickBreaking(n_categories=3, fits=fits)
        per_cat = posterior_predict_categories(frame, sb, layer, draws=6,
                                               rng=np.random.default_rng(23))
        assert len(per_cat) == 3
        total = sum(est.mean for est in per_cat)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)
