"""Random linear projections that nearly preserve norms and inner products.

Entries are i.i.d. N(0, 1/k) (gaussian family) or +-1/sqrt(k)
(rademacher family), so E[||Ax||^2] = ||x||^2 for any fixed x.  With
k >= c * eps^-2 * log(1/delta), a fixed vector's norm is preserved to
relative error eps except with probability delta.

Matrices are drawn from a named stream in row-major order, so a shared
(seed, label) pair yields the same matrix in both runs of a pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from repmargin.randomness import RandomStream

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
FAMILIES = (GAUSSIAN, RADEMACHER)


@dataclass(frozen=True)
class JLMatrix:
    entries: np.ndarray  # (k, d)
    family: str

    def __post_init__(self) -> None:
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.size == 0:
            raise ValueError("entries must be a nonempty 2-d array")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]


def sample_jl(stream: RandomStream, k: int, d: int, family: str = GAUSSIAN) -> JLMatrix:
    """Draw a (k, d) projection, consuming exactly k*d stream slots."""
    if k < 1 or d < 1:
        raise ValueError("k and d must be >= 1")
    if family == GAUSSIAN:
        flat = stream.gaussian(0.0, 1.0 / math.sqrt(k), size=k * d)
    elif family == RADEMACHER:
        flat = stream.rademacher(size=k * d) / math.sqrt(k)
    else:
        raise ValueError(f"family must be one of {FAMILIES}")
    return JLMatrix(flat.reshape(k, d), family)


def project(a: JLMatrix, x: np.ndarray) -> np.ndarray:
    """Image Ax of a single vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.d,):
        raise ValueError(f"x must have shape ({a.d},), got {x.shape}")
    return a.entries @ x


def project_rows(a: JLMatrix, xs: np.ndarray) -> np.ndarray:
    """Row-wise image of an (n, d) matrix, returned as (n, k)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != a.d:
        raise ValueError(f"xs must have shape (n, {a.d}), got {xs.shape}")
    return xs @ a.entries.T


def required_dim(eps: float, delta_jl: float, c_jl: float = 8.0) -> int:
    """Smallest projection dimension the eps/delta guarantee calls for.

    Returns ceil(c_jl * eps^-2 * ln(1/delta_jl)), at least 1.
    """
    if not (0 < eps <= 1):
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if not (0 < delta_jl < 1):
        raise ValueError(f"delta_jl must be in (0, 1), got {delta_jl}")
    if c_jl <= 0:
        raise ValueError("c_jl must be positive")
    return max(1, math.ceil(c_jl * eps**-2 * math.log(1.0 / delta_jl)))
