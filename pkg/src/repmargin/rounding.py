"""Randomized lattice rounding with shared offsets.

A rounding grid in R^k is a scaled integer lattice of pitch beta whose
origin is shifted by a random offset o ~ U[0, beta]^k.  A point z is
rounded to one of the 2^k corners of its grid cell: coordinate i goes
down when the shared threshold u_i does not exceed the down-probability

    p_i = (corner_i + beta - z_i) / beta,

and up otherwise.  Ties (u_i == p_i) round down.  Because p_i is linear
in z_i, the rounded value is unbiased coordinatewise, and two nearby
inputs rounded under the *same* grid disagree with probability at most
2 * ||z - z'||_1 / beta.

The grid randomness is drawn once per run from named streams, so paired
runs that share a seed share the grid exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from repmargin.randomness import RandomStream


@dataclass(frozen=True)
class RoundingGrid:
    """Shared randomized grid: pitch beta, offsets in [0, beta], thresholds in [0, 1]."""

    beta: float
    offsets: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self) -> None:
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        o = np.asarray(self.offsets, dtype=np.float64)
        u = np.asarray(self.thresholds, dtype=np.float64)
        if o.ndim != 1 or u.shape != o.shape:
            raise ValueError("offsets and thresholds must be 1-d arrays of equal length")
        if o.size == 0:
            raise ValueError("grid dimension must be at least 1")
        if np.any(o < 0) or np.any(o > self.beta):
            raise ValueError("offsets must lie in [0, beta]")
        if np.any(u < 0) or np.any(u > 1):
            raise ValueError("thresholds must lie in [0, 1]")
        o = o.copy()
        u = u.copy()
        o.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "offsets", o)
        object.__setattr__(self, "thresholds", u)

    @property
    def k(self) -> int:
        return self.offsets.size


@dataclass(frozen=True, eq=False)
class GridPoint:
    """A lattice point, stored as integer cell coordinates plus its grid."""

    coords: tuple
    grid: RoundingGrid

    def __post_init__(self) -> None:
        if len(self.coords) != self.grid.k:
            raise ValueError("coordinate count must match grid dimension")
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridPoint):
            return NotImplemented
        return (
            self.coords == other.coords
            and self.grid.beta == other.grid.beta
            and np.array_equal(self.grid.offsets, other.grid.offsets)
            and np.array_equal(self.grid.thresholds, other.grid.thresholds)
        )

    def __hash__(self) -> int:
        return hash((self.coords, self.grid.beta, self.grid.offsets.tobytes()))


def make_grid(k: int, beta: float, offset_stream: RandomStream, threshold_stream: RandomStream) -> RoundingGrid:
    """Sample a k-dimensional grid: k offset draws then k threshold draws."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (np.isfinite(beta) and beta > 0):
        raise ValueError(f"beta must be positive, got {beta}")
    offsets = offset_stream.uniform(0.0, beta, size=k)
    thresholds = threshold_stream.uniform(0.0, 1.0, size=k)
    return RoundingGrid(beta, offsets, thresholds)


def _floor_coords(z: np.ndarray, offsets: np.ndarray, beta: float) -> np.ndarray:
    return np.floor((z - offsets) / beta)


def _down_probs(z: np.ndarray, offsets: np.ndarray, beta: float, cells: np.ndarray) -> np.ndarray:
    corner = offsets + cells * beta
    # clip guards float noise when z sits on a lattice line
    return np.clip((corner + beta - z) / beta, 0.0, 1.0)


def _round_coords(z: np.ndarray, offsets: np.ndarray, thresholds: np.ndarray, beta: float) -> np.ndarray:
    """Vectorized core shared by ak_round and the Monte Carlo harnesses.

    Broadcasts over leading axes: z, offsets, thresholds may be (k,) or
    (m, k).  Returns integer cell coordinates of the rounded point.
    """
    cells = _floor_coords(z, offsets, beta)
    p = _down_probs(z, offsets, beta, cells)
    return (cells + (thresholds > p)).astype(np.int64)


def floor_corner(z: np.ndarray, grid: RoundingGrid) -> GridPoint:
    """Lower-left corner of the grid cell containing z."""
    z = _check_point(z, grid)
    cells = _floor_coords(z, grid.offsets, grid.beta).astype(np.int64)
    return GridPoint(tuple(cells), grid)


def rounding_probability(z: np.ndarray, grid: RoundingGrid) -> np.ndarray:
    """Per-coordinate probability of rounding down, each in [0, 1]."""
    z = _check_point(z, grid)
    cells = _floor_coords(z, grid.offsets, grid.beta)
    return _down_probs(z, grid.offsets, grid.beta, cells)


def ak_round(z: np.ndarray, grid: RoundingGrid) -> GridPoint:
    """Round z to a corner of its cell using the grid's thresholds.

    Deterministic given the grid: all randomness lives in the grid's
    offsets and thresholds.
    """
    z = _check_point(z, grid)
    coords = _round_coords(z, grid.offsets, grid.thresholds, grid.beta)
    return GridPoint(tuple(coords), grid)


def value(point: GridPoint) -> np.ndarray:
    """Real-space coordinates of a grid point."""
    g = point.grid
    return g.offsets + np.asarray(point.coords, dtype=np.float64) * g.beta


def _check_point(z: np.ndarray, grid: RoundingGrid) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (grid.k,):
        raise ValueError(f"point must have shape ({grid.k},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("point must be finite")
    return z


def grid_to_record(grid: RoundingGrid) -> dict:
    """JSON-ready dict; floats survive a round trip exactly via repr."""
    return {
        "k": grid.k,
        "beta": grid.beta,
        "offsets": [float(v) for v in grid.offsets],
        "thresholds": [float(v) for v in grid.thresholds],
    }


def grid_from_record(rec: Mapping[str, Any]) -> RoundingGrid:
    grid = RoundingGrid(
        float(rec["beta"]),
        np.asarray(rec["offsets"], dtype=np.float64),
        np.asarray(rec["thresholds"], dtype=np.float64),
    )
    if grid.k != int(rec["k"]):
        raise ValueError("record k does not match array length")
    return grid
