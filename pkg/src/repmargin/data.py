"""Synthetic margin distributions, dataset persistence, loss evaluators.

A margin distribution is described by a planted unit vector w_star and a
margin tau: every emitted sample satisfies y * (w_star . x / ||x||) >= tau
and y = sign(w_star . x).  Two feature laws are provided:

* ``uniform-sphere-rejection``: uniform unit sphere; samples violating
  the margin are reflected across the margin boundary (mass moves along
  w_star) rather than rejected, since rejection alone stalls for large
  tau.  All features have norm 1.
* ``two-cluster``: gaussian blobs centered at +-w_star, so feature norms
  vary and exercise the x/||x|| normalization everywhere downstream.
  The same reflection enforces the margin on the direction of each
  sample; the original norm is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from repmargin.randomness import RandomStream

LAW_SPHERE = "uniform-sphere-rejection"
LAW_CLUSTER = "two-cluster"
LAWS = (LAW_SPHERE, LAW_CLUSTER)

# two-cluster blob spread; larger values put more mass below the margin
# pre-reflection and widen the norm distribution
_CLUSTER_SIGMA = 0.5

# samples with margin below tau*(1+_EDGE) are treated as violating, and
# reflected margins clear tau by at least _PAD, so that recomputing
# y*(w.x/||x||) in float arithmetic can never dip under tau
_EDGE = 1e-12
_PAD = 1e-9


class LabeledSample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass
class Dataset:
    """Feature matrix (n, d), labels in {-1, +1}, and the planted margin."""

    x: np.ndarray
    y: np.ndarray
    tau: float = 0.0

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] == 0:
            raise ValueError("x must be a nonempty (n, d) array")
        if self.y.shape != (self.x.shape[0],):
            raise ValueError("y must have one label per row of x")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("features must be finite")
        if not np.all(np.abs(self.y) == 1):
            raise ValueError("labels must be +-1")
        if np.any(np.linalg.norm(self.x, axis=1) == 0):
            raise ValueError("zero feature vectors are not allowed")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.n

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(self.x[i], int(self.y[i]))

    def slice(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.x[start:stop].copy(), self.y[start:stop].copy(), self.tau)


@dataclass(frozen=True)
class MarginSpec:
    """Planted halfspace distribution: dimension, margin, direction, law."""

    dim: int
    tau: float
    w_star: np.ndarray
    law: str = LAW_SPHERE

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (0 < self.tau < 1):
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        w = np.asarray(self.w_star, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"w_star must have shape ({self.dim},)")
        if abs(np.linalg.norm(w) - 1.0) > 1e-9:
            raise ValueError("w_star must be a unit vector")
        if self.law not in LAWS:
            raise ValueError(f"law must be one of {LAWS}")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w_star", w)


def random_unit_vector(dim: int, stream: RandomStream) -> np.ndarray:
    """Uniform direction: dim gaussian draws, normalized."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    v = stream.gaussian(size=dim)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:  # astronomically unlikely; keep deterministic anyway
        v = np.zeros(dim)
        v[0] = 1.0
        return v
    return v / nrm


def _fallback_perp(w: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to w (dim >= 2)."""
    j = int(np.argmin(np.abs(w)))
    p = -w[j] * w
    p[j] += 1.0
    return p / np.linalg.norm(p)


def gen_dataset(spec: MarginSpec, n: int, stream: RandomStream) -> Dataset:
    """Draw n samples from the planted margin distribution.

    Stream consumption is fixed per law: the sphere law consumes n*dim
    gaussian slots; the two-cluster law consumes n rademacher label
    slots first, then n*dim gaussian slots.

    Margin enforcement: let m = y * (w_star . xhat) for the unit
    direction xhat of the raw sample.  Directions with m below tau are
    reflected to m' = min(2*tau - m, 1) by moving mass along w_star in
    the plane span(w_star, xhat), which preserves the orthogonal
    direction and (for the cluster law) the norm.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d, tau, w = spec.dim, spec.tau, spec.w_star

    if spec.law == LAW_CLUSTER:
        y = stream.rademacher(size=n).astype(np.int64)
        g = stream.gaussian(size=n * d).reshape(n, d)
        raw = y[:, None] * w + _CLUSTER_SIGMA * g
        radii = np.linalg.norm(raw, axis=1)
        radii = np.maximum(radii, 1e-9)
        xhat = raw / radii[:, None]
    else:
        g = stream.gaussian(size=n * d).reshape(n, d)
        nrm = np.linalg.norm(g, axis=1)
        nrm[nrm == 0.0] = 1.0
        xhat = g / nrm[:, None]
        dots = xhat @ w
        y = np.where(dots >= 0.0, 1, -1).astype(np.int64)
        radii = np.ones(n)

    m = y * (xhat @ w)
    bad = m < tau * (1.0 + _EDGE)
    if np.any(bad) and d == 1:
        # 1-d has no orthogonal direction; snap to +-w_star
        xhat[bad] = (y[bad, None] * w)
    elif np.any(bad):
        mb = m[bad]
        target = np.minimum(2.0 * tau - mb, 1.0)
        target = np.clip(target, tau + _PAD, 1.0)
        perp = xhat[bad] - (xhat[bad] @ w)[:, None] * w
        pn = np.linalg.norm(perp, axis=1)
        tiny = pn < 1e-12
        if np.any(tiny):
            perp[tiny] = _fallback_perp(w)
            pn[tiny] = 1.0
        perp /= pn[:, None]
        coef = np.sqrt(np.maximum(1.0 - target**2, 0.0))
        xhat[bad] = (y[bad] * target)[:, None] * w + coef[:, None] * perp

    x = xhat if spec.law == LAW_SPHERE else xhat * radii[:, None]
    return Dataset(x, y, tau)


def _hyp_vector(w) -> np.ndarray:
    """Accept a Halfspace-like object (has .w) or a plain vector."""
    return np.asarray(getattr(w, "w", w), dtype=np.float64)


def error_rate(w, S: Dataset) -> float:
    """Fraction of S misclassified by sign(w . x); sign(0) counts as error."""
    if S.n == 0:
        raise ValueError("empty dataset")
    v = _hyp_vector(w)
    return float(np.mean(S.y * (S.x @ v) <= 0.0))


def margin_loss_rate(w, S: Dataset, theta: float) -> float:
    """Fraction of S with y * (w . x / ||x||) < theta."""
    if S.n == 0:
        raise ValueError("empty dataset")
    v = _hyp_vector(w)
    norms = np.linalg.norm(S.x, axis=1)
    return float(np.mean(S.y * (S.x @ v) / norms < theta))


class DatasetFormatError(ValueError):
    """Malformed dataset file; carries the offending 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def save_dataset(path, S: Dataset) -> None:
    """Text format: header `d n tau`, then per line d floats and a label.

    Floats are written with repr, which round-trips float64 exactly.
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{S.dim} {S.n} {S.tau!r}\n")
        for i in range(S.n):
            cols = " ".join(repr(float(v)) for v in S.x[i])
            fh.write(f"{cols} {int(S.y[i])}\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError(1, "empty file")
    head = lines[0].split()
    if len(head) != 3:
        raise DatasetFormatError(1, f"header must be 'd n tau', got {len(head)} fields")
    try:
        d, n, tau = int(head[0]), int(head[1]), float(head[2])
    except ValueError as exc:
        raise DatasetFormatError(1, f"bad header: {exc}") from None
    if d < 1 or n < 1:
        raise DatasetFormatError(1, "d and n must be positive")
    if len(lines) - 1 != n:
        raise DatasetFormatError(len(lines), f"expected {n} sample lines, found {len(lines) - 1}")
    x = np.empty((n, d))
    y = np.empty(n, dtype=np.int64)
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != d + 1:
            raise DatasetFormatError(i, f"expected {d + 1} columns, got {len(parts)}")
        try:
            row = [float(p) for p in parts[:d]]
            lab = int(parts[d])
        except ValueError as exc:
            raise DatasetFormatError(i, str(exc)) from None
        if not all(math.isfinite(v) for v in row):
            raise DatasetFormatError(i, "non-finite feature value")
        if lab not in (-1, 1):
            raise DatasetFormatError(i, f"label must be -1 or 1, got {lab}")
        x[i - 2] = row
        y[i - 2] = lab
    try:
        return Dataset(x, y, tau)
    except ValueError as exc:
        raise DatasetFormatError(1, str(exc)) from None


class SyntheticSource:
    """Unbounded sample source; each draw consumes the stream in order."""

    def __init__(self, spec: MarginSpec, stream: RandomStream):
        self.spec = spec
        self._stream = stream

    @property
    def dim(self) -> int:
        return self.spec.dim

    def draw(self, m: int) -> Dataset:
        return gen_dataset(self.spec, m, self._stream)


class FixedSource:
    """Serves consecutive slices of a stored dataset, then runs dry."""

    def __init__(self, dataset: Dataset):
        self._data = dataset
        self._cursor = 0

    @property
    def dim(self) -> int:
        return self._data.dim

    @property
    def remaining(self) -> int:
        return self._data.n - self._cursor

    def draw(self, m: int) -> Dataset:
        if m > self.remaining:
            raise ValueError(f"source exhausted: requested {m}, have {self.remaining}")
        out = self._data.slice(self._cursor, self._cursor + m)
        self._cursor += m
        return out
