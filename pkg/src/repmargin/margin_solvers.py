"""Per-batch weak solvers for margin halfspaces.

Two solver families:

* ``svm_margin``: margin perceptron with a shrinking slack schedule.
  It repeatedly updates on the worst-margin sample relative to the
  working level ``gamma + slack`` and geometrically shrinks the slack,
  so early updates chase a large margin and the level settles toward
  the requested target.  The returned vector is re-verified against
  every sample before it is accepted.

* ``sgd_surrogate`` / ``boost_sgd``: projected SGD on a regularized
  hinge-like surrogate that upper-bounds the tau/2-margin loss, plus a
  repeat-and-select booster that estimates candidate objectives on a
  held-out half and keeps the best.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from repmargin import config
from repmargin.data import Dataset
from repmargin.randomness import RandomStream

# slack schedule: level_t = gamma + (1 - gamma) * decay^updates
_SLACK_DECAY = 0.998
# bar for treating a candidate norm as zero
_TINY = 1e-12


@dataclass
class Halfspace:
    """Unit normal vector plus the margin certified or claimed for it."""

    w: np.ndarray
    margin: float

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1 or self.w.size == 0:
            raise ValueError("w must be a nonempty vector")
        nrm = np.linalg.norm(self.w)
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"w must be unit norm, got {nrm!r}")


class InfeasibleMargin(RuntimeError):
    """No halfspace with the requested margin was found within budget."""

    def __init__(self, target: float, achieved: float, updates: int, batch_index: Optional[int] = None):
        self.target = target
        self.achieved = achieved
        self.updates = updates
        self.batch_index = batch_index
        where = "" if batch_index is None else f" (batch {batch_index})"
        super().__init__(
            f"no margin-{target:g} halfspace within {updates} updates{where}; best achieved {achieved:.4f}"
        )

    def with_batch(self, batch_index: int) -> "InfeasibleMargin":
        return InfeasibleMargin(self.target, self.achieved, self.updates, batch_index)


def svm_margin(S: Dataset, gamma_target: float, budget: int = 3000) -> Halfspace:
    """Find a unit w with y * (w . x / ||x||) >= gamma_target on all of S.

    Margin perceptron on the label-signed normalized samples.  Each
    iteration updates on the current worst sample unless every margin
    clears gamma_target + slack, in which case the candidate is
    certified and returned.  The slack decays geometrically from
    1 - gamma_target toward 0 as updates accrue.
    """
    if not (0 < gamma_target < 1):
        raise ValueError(f"gamma_target must be in (0, 1), got {gamma_target}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    norms = np.linalg.norm(S.x, axis=1)
    signed = (S.y / norms)[:, None] * S.x  # rows y * x / ||x||

    w = np.zeros(S.dim)
    updates = 0
    for _ in range(budget):
        wn = np.linalg.norm(w)
        margins = signed @ w / wn if wn > _TINY else np.zeros(S.n)
        worst = int(np.argmin(margins))
        m = float(margins[worst])
        level = gamma_target + (1.0 - gamma_target) * _SLACK_DECAY**updates
        if m >= min(level, 1.0 - _TINY) and wn > _TINY:
            return _certify(w / wn, signed, gamma_target, updates)
        if m >= level:
            break
        w = w + signed[worst]
        updates += 1

    wn = np.linalg.norm(w)
    if wn > _TINY:
        m = float(np.min(signed @ w / wn))
        if m >= gamma_target:
            return _certify(w / wn, signed, gamma_target, updates)
    else:
        m = -1.0
    raise InfeasibleMargin(gamma_target, m, updates)


def _certify(w_unit: np.ndarray, signed: np.ndarray, gamma_target: float, updates: int) -> Halfspace:
    # final verification pass: exact per-sample check on the returned vector
    margins = signed @ w_unit
    achieved = float(np.min(margins))
    if achieved < gamma_target:
        raise InfeasibleMargin(gamma_target, achieved, updates)
    return Halfspace(w_unit, achieved)


@dataclass(frozen=True)
class SurrogateParams:
    """Surrogate loss parameters; the regularizer weight is pinned to eps/10."""

    tau: float
    eps: float
    mu: float = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not (0 < self.tau < 1):
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if not (0 < self.eps < 1):
            raise ValueError(f"eps must be in (0, 1), got {self.eps}")
        object.__setattr__(self, "mu", self.eps / 10.0)


def surrogate_loss(w: np.ndarray, x: np.ndarray, y: int, tau: float) -> float:
    """max(0, 2 - (2/tau) * y * (x . w)); zero once the margin reaches tau."""
    if not (0 < tau < 1):
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if y not in (-1, 1):
        raise ValueError("y must be +-1")
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return float(max(0.0, 2.0 - (2.0 / tau) * y * float(x @ w)))


def _hinge_mean(w_rows: np.ndarray, X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Mean surrogate loss of each row of w_rows over (X, y)."""
    s = (X @ w_rows.T) * y[:, None]  # (n, R)
    return np.maximum(0.0, 2.0 - (2.0 / tau) * s).mean(axis=0)


def regularized_objective(w: np.ndarray, S: Dataset, params: SurrogateParams) -> float:
    """Empirical surrogate mean plus mu * ||w||^2; expects unit-ball features."""
    w = np.asarray(w, dtype=np.float64)
    hinge = float(_hinge_mean(w[None, :], S.x, S.y, params.tau)[0])
    return hinge + params.mu * float(w @ w)


def sgd_surrogate(sample_source: Dataset, params: SurrogateParams, t_steps: int, stream: RandomStream) -> np.ndarray:
    """Projected SGD on the regularized surrogate.

    Runs t_steps iterate snapshots w_1..w_T starting from w_1 = 0, with
    T - 1 updates between them; step t uses step size 2/(mu*(t+1)) and
    a single sample drawn with replacement (one stream slot per update,
    so t_steps - 1 slots total).  Returns the weighted average
    sum_t 2t/(T(T+1)) w_t, which stays in the unit ball because every
    iterate is projected onto it.

    The hinge subgradient -(2/tau) y x is applied only when the hinge
    is strictly positive; on the kink the zero-loss branch is taken.
    """
    if t_steps < 1:
        raise ValueError("t_steps must be >= 1")
    T = t_steps
    X, Y = sample_source.x, sample_source.y
    n, d = X.shape
    idx = stream.integers(n, size=T - 1) if T > 1 else np.empty(0, dtype=np.int64)

    two_over_tau = 2.0 / params.tau
    mu = params.mu
    w = np.zeros(d)
    acc = np.zeros(d)
    # reductions spelled out as (a*b).sum() so the vectorized twin
    # _sgd_surrogate_stack produces bit-identical floats
    for t in range(1, T + 1):
        acc += t * w
        if t == T:
            break
        i = int(idx[t - 1])
        s = Y[i] * float((X[i] * w).sum())
        eta = 2.0 / (mu * (t + 1))
        coef = two_over_tau * Y[i] if 2.0 - two_over_tau * s > 0.0 else 0.0
        g = 2.0 * mu * w - coef * X[i]
        w = w - eta * g
        wn = float(np.sqrt((w * w).sum()))
        if wn > 1.0:
            w = w / wn
    return acc * (2.0 / (T * (T + 1)))


def _sgd_surrogate_stack(
    x_flat: np.ndarray,
    y_flat: np.ndarray,
    row_base: np.ndarray,
    n_per: int,
    params: SurrogateParams,
    t_steps: int,
    idx: np.ndarray,
) -> np.ndarray:
    """Vectorized twin of sgd_surrogate for R runs sharing the step clock.

    x_flat stacks all runs' datasets ((R_datasets * n_per, d)); run r
    reads rows row_base[r] + idx[t, r].  Must follow the exact update
    law of sgd_surrogate; equivalence is pinned by a unit test.
    """
    T = t_steps
    R = row_base.size
    d = x_flat.shape[1]
    two_over_tau = 2.0 / params.tau
    mu = params.mu

    W = np.zeros((R, d))
    acc = np.zeros((R, d))
    for t in range(1, T + 1):
        acc += t * W
        if t == T:
            break
        rows = row_base + idx[t - 1]
        xs = x_flat[rows]
        ys = y_flat[rows]
        s = ys * (xs * W).sum(axis=1)
        eta = 2.0 / (mu * (t + 1))
        active = (2.0 - two_over_tau * s) > 0.0
        coef = np.where(active, two_over_tau * ys, 0.0)
        G = 2.0 * mu * W - coef[:, None] * xs
        W = W - eta * G
        wn = np.sqrt((W * W).sum(axis=1))
        np.maximum(wn, 1.0, out=wn)
        W = W / wn[:, None]
    return acc * (2.0 / (T * (T + 1)))


def boost_plan(eps: float, tau: float, delta: float, c_t: float, c_n: float, iter_cap: int) -> tuple:
    """Step count and repetition count for boost_sgd."""
    T = max(2, min(math.ceil(c_t * eps**-2 * tau**-2), iter_cap))
    reps = max(1, math.ceil(c_n * math.log(1.0 / delta)))
    return T, reps


def _select_candidate(W: np.ndarray, est_x: np.ndarray, est_y: np.ndarray, params: SurrogateParams) -> np.ndarray:
    """Pick the candidate with the lowest held-out objective, normalized."""
    objs = _hinge_mean(W, est_x, est_y, params.tau) + params.mu * (W * W).sum(axis=1)
    best = int(np.argmin(objs))
    w = W[best]
    nrm = float(np.sqrt((w * w).sum()))
    if nrm < _TINY:
        w = np.zeros(W.shape[1])
        w[0] = 1.0
        return w
    return w / nrm


def boost_sgd(
    S: Dataset,
    eps: float,
    tau: float,
    delta: float,
    stream: RandomStream,
    *,
    c_t: float = config.C_T_DEFAULT,
    c_n: float = config.C_N_DEFAULT,
    iter_cap: int = config.SGD_ITER_CAP,
) -> Halfspace:
    """Repeat sgd_surrogate and keep the best candidate.

    The batch is split in half: candidates train on the first half and
    are compared by their objective on the second.  Repetition r draws
    its SGD indices from stream.child("rep", r), so results do not
    depend on evaluation order.  The winner is normalized to the unit
    sphere; its margin over the full batch is reported informationally.
    """
    if not (0 < delta < 1):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if S.n < 2:
        raise ValueError("need at least 2 samples to split")
    params = SurrogateParams(tau=tau, eps=eps)
    T, reps = boost_plan(eps, tau, delta, c_t, c_n, iter_cap)
    half = S.n // 2

    idx = np.empty((T - 1, reps), dtype=np.int64)
    for r in range(reps):
        idx[:, r] = stream.child("rep", r).integers(half, size=T - 1)
    W = _sgd_surrogate_stack(
        S.x[:half], S.y[:half], np.zeros(reps, dtype=np.int64), half, params, T, idx
    )
    w = _select_candidate(W, S.x[half:], S.y[half:], params)

    norms = np.linalg.norm(S.x, axis=1)
    margin = float(np.min(S.y * (S.x @ w) / norms))
    return Halfspace(w, margin)
