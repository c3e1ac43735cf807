"""Frozen random hidden layer mapping complex covariates to sigmoid features."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = ["ElmLayer", "elm_init", "elm_transform"]


@dataclass(frozen=True)
class ElmLayer:
    """Hidden-layer weights, generated once and never updated afterwards.

    Attributes:
        weights: (h, r) matrix of hidden weights.
        h: number of hidden nodes.
        r: input dimension.
        sparsity: fraction of entries forced to exactly zero.
        seed: RNG seed used to generate the weights.
        distribution: generating distribution name (only "normal" supported).
    """

    weights: np.ndarray = field(repr=False)
    h: int
    r: int
    sparsity: float
    seed: int
    distribution: str = "normal"

    def save(self, meta_path, matrix_path):
        """Write layer metadata as JSON and the full weight matrix as .npy.

        The metadata (seed, dims, sparsity) suffices to regenerate the layer;
        the matrix dump is provided for audit.
        """
        meta = {
            "h": self.h,
            "r": self.r,
            "sparsity": self.sparsity,
            "seed": self.seed,
            "distribution": self.distribution,
        }
        Path(meta_path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
        np.save(matrix_path, self.weights)

    @classmethod
    def load(cls, meta_path, matrix_path=None):
        meta = json.loads(Path(meta_path).read_text())
        if matrix_path is not None:
            weights = np.load(matrix_path)
            if weights.shape != (meta["h"], meta["r"]):
                raise ValidationError("ELM matrix dump does not match its metadata")
            return cls(weights=weights, **meta)
        return elm_init(
            meta["h"], meta["r"], meta["sparsity"], meta["seed"], meta["distribution"]
        )


def elm_init(h, r, sparsity=0.0, seed=0, distribution="normal"):
    """Generate a frozen hidden layer.

    Entries are iid standard Normal draws; floor(h * r * sparsity) of them,
    chosen uniformly without replacement, are then set to exactly zero.
    The same (h, r, sparsity, seed) always reproduces the same matrix.
    """
    if distribution != "normal":
        raise ValidationError(
            f"unsupported hidden-weight distribution {distribution!r}; only 'normal' is implemented"
        )
    h, r = int(h), int(r)
    if h < 1 or r < 1:
        raise ValidationError("ELM dimensions h and r must be at least 1")
    if not 0.0 <= sparsity < 1.0:
        raise ValidationError("sparsity must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal((h, r))
    n_zero = int(np.floor(h * r * sparsity))
    if n_zero:
        flat = rng.choice(h * r, size=n_zero, replace=False)
        weights.flat[flat] = 0.0
    weights.setflags(write=False)
    return ElmLayer(weights=weights, h=h, r=r, sparsity=float(sparsity), seed=int(seed),
                    distribution=distribution)


def elm_transform(layer, psi):
    """Map inputs through the frozen layer: sigmoid(A @ psi).

    psi may be a single length-r vector or an (n, r) matrix; the result has
    one sigmoid feature per hidden node, each strictly inside (0, 1).
    """
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape[-1] != layer.r:
        raise ValidationError(
            f"input dimension {psi.shape[-1]} does not match layer r={layer.r}"
        )
    act = psi @ layer.weights.T
    # Clip the activation so the sigmoid never rounds to an exact 0 or 1.
    np.clip(act, -36.0, 36.0, out=act)
    return 1.0 / (1.0 + np.exp(-act))
