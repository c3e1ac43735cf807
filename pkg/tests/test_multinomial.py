"""Stick-breaking decomposition and reconstruction."""

import itertools

import numpy as np
import pytest

from budis import (
    BudisSpec,
    ValidationError,
    fit_stick_breaking,
    sb_conditionals,
    sb_decompose,
    sb_reconstruct,
)


class TestDecompose:
    def test_first_category_taken(self):
        assert sb_decompose(1, 3) == [(1, True), (0, False)]

    def test_last_category_never_taken(self):
        assert sb_decompose(3, 3) == [(0, True), (0, True)]

    def test_middle_category(self):
        assert sb_decompose(2, 4) == [(0, True), (1, True), (0, False)]

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            sb_decompose(0, 3)
        with pytest.raises(ValidationError):
            sb_decompose(4, 3)


class TestReconstruct:
    def test_worked_example(self):
        p = np.array([0.2, 0.3, 0.5])
        ptilde = sb_conditionals(p)
        assert ptilde[0] == 0.2
        # 0.3 / (1 - 0.2) = 0.375 in exact arithmetic; one ulp in float64.
        assert abs(ptilde[1] - 0.375) <= np.spacing(0.375)
        np.testing.assert_allclose(sb_reconstruct(ptilde), p, atol=1e-15)

    def test_even_split(self):
        np.testing.assert_allclose(sb_reconstruct([0.5, 0.5]), [0.5, 0.25, 0.25])

    def test_roundtrip_on_simplex_grid(self):
        for k in (3, 4):
            grid = np.arange(1, 10) / 10.0
            for combo in itertools.product(grid, repeat=k - 1):
                p_head = np.array(combo)
                if p_head.sum() >= 0.999:
                    continue
                p = np.concatenate([p_head, [1.0 - p_head.sum()]])
                back = sb_reconstruct(sb_conditionals(p))
                assert np.abs(back - p).max() < 1e-10
                assert back.min() >= 0.0
                assert abs(back.sum() - 1.0) < 1e-10

    def test_reconstruct_always_on_simplex(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            ptilde = rng.uniform(0.01, 0.99, size=rng.integers(1, 6))
            p = sb_reconstruct(ptilde)
            assert p.min() >= 0.0
            assert abs(p.sum() - 1.0) < 1e-12

    def test_validation(self):
        with pytest.raises(ValidationError):
            sb_reconstruct([0.2, 1.0])
        with pytest.raises(ValidationError):
            sb_reconstruct([])
        with pytest.raises(ValidationError):
            sb_conditionals([0.2, 0.9])  # does not sum to one


def test_fit_recovers_category_frequencies():
    """Intercept-only stick-breaking fits reproduce the empirical frequencies."""
    rng = np.random.default_rng(42)
    p_true = np.array([0.5, 0.3, 0.2])
    n = 800
    categories = rng.choice([1, 2, 3], size=n, p=p_true)
    X = np.ones((n, 1))
    sb = fit_stick_breaking(categories, X, spec=BudisSpec(), fitter="vb")
    ptilde = np.array([1.0 / (1.0 + np.exp(-f.mean[0])) for f in sb.fits])
    p_hat = sb_reconstruct(ptilde)
    empirical = np.bincount(categories, minlength=4)[1:] / n
    # Posterior means track the empirical frequencies within sampling error.
    assert np.abs(p_hat - empirical).max() < 3 * np.sqrt(0.25 / n)
