"""Covariate construction: word-indicator features from free text and
linear covariates (intercept, demographic indicators, spatial basis).

Tokenization is deliberately simple and fully specified so results are
reproducible: lowercase, split on non-alphanumeric characters, drop a fixed
English stopword list, drop tokens shorter than two characters.  Vocabulary
rank is by document frequency (number of responses containing the token),
ties broken lexicographically.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "Vocabulary",
    "SpatialBasis",
    "tokenize",
    "build_vocabulary",
    "text_indicators",
    "indicator_matrix",
    "spatial_basis",
    "linear_covariates",
    "read_adjacency_csv",
]

# Classic English stopword list (the 179-word list shipped with common NLP
# toolkits), frozen here so tokenization never depends on external packages.
STOPWORDS = frozenset("""
i me my myself we our ours ourselves you you're you've you'll you'd your
yours yourself yourselves he him his himself she she's her hers herself it
it's its itself they them their theirs themselves what which who whom this
that that'll these those am is are was were be been being have has had
having do does did doing a an the and but if or because as until while of
at by for with about against between into through during before after
above below to from up down in out on off over under again further then
once here there when where why how all any both each few more most other
some such no nor not only own same so than too very s t can will just don
don't should should've now d ll m o re ve y ain aren aren't couldn
couldn't didn didn't doesn doesn't hadn hadn't hasn hasn't haven haven't
isn isn't ma mightn mightn't mustn mustn't needn needn't shan shan't
shouldn shouldn't wasn wasn't weren weren't won won't wouldn wouldn't
""".split())

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text):
    """Lowercase, split on non-alphanumerics, drop stopwords and 1-char tokens."""
    tokens = _TOKEN_SPLIT.split(text.lower())
    return [t for t in tokens if len(t) >= 2 and t not in STOPWORDS]


@dataclass(frozen=True)
class Vocabulary:
    """Top-K tokens ordered by descending document frequency (ties lexicographic)."""

    words: tuple
    counts: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: j for j, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "token", "document_frequency"])
            for rank, (word, count) in enumerate(zip(self.words, self.counts), start=1):
                writer.writerow([rank, word, count])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValidationError(f"empty vocabulary file: {path}")
        return cls(
            words=tuple(r["token"] for r in rows),
            counts=tuple(int(r["document_frequency"]) for r in rows),
        )


def build_vocabulary(texts, k):
    """Rank tokens by document frequency across ``texts`` and keep the top k.

    If fewer than k distinct tokens survive tokenization, all of them are
    returned.  An entirely empty corpus is an error.
    """
    if k < 1:
        raise ValidationError("vocabulary size k must be at least 1")
    df = Counter()
    for text in texts:
        df.update(set(tokenize(text)))
    if not df:
        raise ValidationError("no tokens survive tokenization; corpus is empty")
    ranked = sorted(df.items(), key=lambda item: (-item[1], item[0]))[:k]
    return Vocabulary(words=tuple(w for w, _ in ranked), counts=tuple(c for _, c in ranked))


def text_indicators(vocab, text):
    """0/1 vector of length K; entry j is 1 iff vocabulary word j appears in text."""
    present = set(tokenize(text))
    out = np.zeros(len(vocab), dtype=np.float64)
    for token in present:
        j = vocab._index.get(token)
        if j is not None:
            out[j] = 1.0
    return out


def indicator_matrix(vocab, texts):
    """Stack text_indicators over a corpus into an (n, K) matrix."""
    return np.array([text_indicators(vocab, t) for t in texts], dtype=np.float64)


@dataclass(frozen=True)
class SpatialBasis:
    """Leading eigenvectors of a symmetric area adjacency matrix.

    vectors has one row per area and q columns, ordered by descending
    eigenvalue; columns are unit-norm with the first nonzero entry positive.
    """

    areas: tuple
    vectors: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(self.areas)})

    @property
    def q(self):
        return self.vectors.shape[1]

    def row(self, area):
        i = self._index.get(area)
        if i is None:
            raise ValidationError(f"unknown area label: {area!r}")
        return self.vectors[i]

    def rows(self, areas):
        idx = np.empty(len(areas), dtype=np.int64)
        for j, a in enumerate(areas):
            i = self._index.get(a)
            if i is None:
                raise ValidationError(f"unknown area label: {a!r}")
            idx[j] = i
        return self.vectors[idx]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["area"] + [f"v{j + 1}" for j in range(self.q)])
            writer.writerow(["<eigenvalue>"] + [repr(float(v)) for v in self.eigenvalues])
            for i, area in enumerate(self.areas):
                writer.writerow([area] + [repr(float(v)) for v in self.vectors[i]])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, eig_row, body = rows[0], rows[1], rows[2:]
        q = len(header) - 1
        return cls(
            areas=tuple(r[0] for r in body),
            vectors=np.array([[float(v) for v in r[1:]] for r in body]),
            eigenvalues=np.array([float(v) for v in eig_row[1:]]),
        )


def spatial_basis(adjacency, q, areas=None):
    """First q eigenvectors (descending eigenvalue) of a symmetric 0/1 adjacency.

    Columns are normalized to unit length and sign-fixed so the first entry
    exceeding 1e-12 in magnitude is positive.
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    m = adjacency.shape[0]
    if adjacency.shape != (m, m):
        raise ValidationError("adjacency matrix must be square")
    if not np.array_equal(adjacency, adjacency.T):
        raise ValidationError("adjacency matrix must be symmetric")
    if np.any(np.diag(adjacency) != 0.0):
        raise ValidationError("adjacency matrix must have a zero diagonal")
    if not 1 <= q <= m:
        raise ValidationError(f"q must be in [1, {m}]")
    if areas is None:
        areas = tuple(str(i) for i in range(m))
    areas = tuple(areas)
    if len(areas) != m:
        raise ValidationError("area labels must match the adjacency dimension")

    vals, vecs = np.linalg.eigh(adjacency)
    order = np.argsort(vals)[::-1][:q]
    vecs = vecs[:, order]
    vals = vals[order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    for j in range(q):
        nz = np.nonzero(np.abs(vecs[:, j]) > 1e-12)[0]
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    return SpatialBasis(areas=areas, vectors=vecs, eigenvalues=vals)


def linear_covariates(indicators, basis, area):
    """[1, demographic indicators..., spatial basis row for the unit's area]."""
    row = basis.row(area)
    return np.concatenate(([1.0], np.asarray(indicators, dtype=np.float64), row))


def build_linear_matrix(indicators, basis, areas):
    """Vectorized linear_covariates over n units: (n, 1 + d + q) design block."""
    indicators = np.asarray(indicators, dtype=np.float64)
    if indicators.ndim != 2:
        raise ValidationError("indicators must be a 2-d array (units x fields)")
    ones = np.ones((indicators.shape[0], 1))
    return np.hstack([ones, indicators, basis.rows(areas)])


def read_adjacency_csv(path):
    """Read an adjacency CSV: header row of area labels, 0/1 body. Returns
    (area labels, matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"adjacency file {path} has no body rows")
    areas = tuple(label.strip() for label in rows[0])
    body = rows[1:]
    if len(body) != len(areas):
        raise ValidationError(
            f"adjacency file {path}: {len(body)} rows for {len(areas)} labelled areas"
        )
    try:
        matrix = np.array([[float(v) for v in row] for row in body])
    except ValueError as exc:
        raise ValidationError(f"adjacency file {path}: non-numeric entry ({exc})") from None
    if matrix.shape != (len(areas), len(areas)):
        raise ValidationError(f"adjacency file {path}: body is not square")
    if not np.isin(matrix, (0.0, 1.0)).all():
        raise ValidationError(f"adjacency file {path}: entries must be 0 or 1")
    return areas, matrix
