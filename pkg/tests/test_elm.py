"""Frozen hidden layer: generation, sparsity, transform, serialization."""

import numpy as np
import pytest

from budis import ElmLayer, ValidationError, elm_init, elm_transform


def test_sparsity_zero_count_matches_paper_scale():
    layer = elm_init(240, 1000, sparsity=0.10, seed=4)
    assert int((layer.weights == 0.0).sum()) == 24_000


def test_no_forced_zeros():
    layer = elm_init(3, 2, sparsity=0.0, seed=4)
    assert layer.weights.shape == (3, 2)
    assert not np.any(layer.weights == 0.0)


def test_deterministic_generation():
    a = elm_init(16, 9, sparsity=0.25, seed=123)
    b = elm_init(16, 9, sparsity=0.25, seed=123)
    np.testing.assert_array_equal(a.weights, b.weights)
    c = elm_init(16, 9, sparsity=0.25, seed=124)
    assert np.any(a.weights != c.weights)


def test_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        elm_init(0, 5)
    with pytest.raises(ValidationError):
        elm_init(5, 0)
    with pytest.raises(ValidationError):
        elm_init(5, 5, sparsity=1.0)
    with pytest.raises(ValidationError):
        elm_init(5, 5, distribution="uniform")


def test_transform_zero_input_gives_half():
    layer = elm_init(7, 3, seed=0)
    out = elm_transform(layer, np.zeros(3))
    np.testing.assert_allclose(out, 0.5)


def test_transform_known_value():
    layer = ElmLayer(weights=np.array([[1.0, 0.0]]), h=1, r=2, sparsity=0.0, seed=0)
    out = elm_transform(layer, np.array([np.log(3.0), 5.0]))
    assert out[0] == pytest.approx(0.75, abs=1e-15)


def test_transform_matches_naive_oracle():
    rng = np.random.default_rng(5)
    layer = elm_init(12, 6, sparsity=0.2, seed=7)
    psi = rng.normal(size=(20, 6))
    got = elm_transform(layer, psi)
    # Naive re-derivation: per-element loop, plain arithmetic.
    naive = np.empty((20, 12))
    for i in range(20):
        for j in range(12):
            act = sum(layer.weights[j, k] * psi[i, k] for k in range(6))
            naive[i, j] = 1.0 / (1.0 + np.exp(-act))
    np.testing.assert_allclose(got, naive, atol=1e-12)


def test_outputs_strictly_inside_unit_interval():
    layer = elm_init(20, 5, seed=1)
    psi = np.random.default_rng(2).normal(scale=50.0, size=(100, 5))
    out = elm_transform(layer, psi)
    assert out.min() > 0.0
    assert out.max() < 1.0


def test_transform_is_pure_and_layer_frozen():
    layer = elm_init(6, 4, seed=9)
    psi = np.random.default_rng(0).normal(size=4)
    first = elm_transform(layer, psi)
    second = elm_transform(layer, psi)
    np.testing.assert_array_equal(first, second)
    with pytest.raises(ValueError):
        layer.weights[0, 0] = 1.0  # read-only buffer


def test_dimension_mismatch():
    layer = elm_init(6, 4, seed=9)
    with pytest.raises(ValidationError):
        elm_transform(layer, np.zeros(5))


def test_save_load_roundtrip(tmp_path):
    layer = elm_init(8, 5, sparsity=0.1, seed=77)
    layer.save(tmp_path / "layer.json", tmp_path / "layer.npy")
    full = ElmLayer.load(tmp_path / "layer.json", tmp_path / "layer.npy")
    np.testing.assert_array_equal(full.weights, layer.weights)
    regenerated = ElmLayer.load(tmp_path / "layer.json")
    np.testing.assert_array_equal(regenerated.weights, layer.weights)
