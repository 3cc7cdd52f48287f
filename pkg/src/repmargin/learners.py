"""End-to-end replicable margin-halfspace learners.

All three learners share a contract: consume i.i.d. samples from a
tau-margin source, use only named streams derived from the caller's
shared seed, and return a unit hypothesis plus a discrete canonical
token.  Two executions with the same seed on independent datasets agree
on the token with probability controlled by rho.

* ``algo2``: B batches solved by the margin perceptron at target tau/2,
  batch average projected by a shared JL matrix and rounded on a shared
  grid; token = grid point.
* ``algo4``: same tail, but batches are normalized and solved by
  boosted projected SGD on the surrogate loss.
* ``algo3``: projects the samples once, scores every point of a fixed
  lattice net over the unit ball in the projected space, and picks the
  winner by shared-offset risk bucketing; token = net index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Union

import numpy as np

from repmargin import config
from repmargin.data import Dataset
from repmargin.margin_solvers import (
    Halfspace,
    InfeasibleMargin,
    SurrogateParams,
    _select_candidate,
    _sgd_surrogate_stack,
    boost_plan,
    svm_margin,
)
from repmargin.projection import FAMILIES, GAUSSIAN, project, project_rows, sample_jl
from repmargin.randomness import RandomStream, SharedSeed, derive_stream
from repmargin.rounding import GridPoint, ak_round, make_grid, value

ALGORITHMS = ("algo2", "algo4", "algo3")

_TINY = 1e-12


class BudgetExceeded(RuntimeError):
    """A derived size blew past its configured ceiling."""

    def __init__(self, quantity: str, amount: float, limit: float):
        self.quantity = quantity
        self.amount = amount
        self.limit = limit
        super().__init__(f"{quantity} = {amount:g} exceeds configured limit {limit:g}")


@dataclass(frozen=True)
class LearnParams:
    """Problem parameters plus the constant knobs of the size formulas.

    c1..c4 left as None fall back to the calibrated per-algorithm
    defaults in config at size-derivation time.
    """

    eps: float
    tau: float
    rho: float
    delta: float
    c1: Optional[float] = None
    c2: Optional[float] = None
    c3: Optional[float] = None
    c4: Optional[float] = None
    c_jl: float = config.C_JL_DEFAULT
    c_t: float = config.C_T_DEFAULT
    c_n: float = config.C_N_DEFAULT
    jl_family: str = GAUSSIAN
    svm_budget: int = config.SVM_UPDATE_BUDGET
    sgd_iter_cap: int = config.SGD_ITER_CAP
    grid_scale: float = config.GRID_SCALE
    net_max_points: int = config.NET_MAX_POINTS
    max_total_samples: int = config.MAX_TOTAL_SAMPLES
    max_batches: int = config.MAX_BATCHES

    def __post_init__(self) -> None:
        for name in ("eps", "tau", "rho", "delta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        for name in ("c1", "c2", "c3", "c4"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("c_jl", "c_t", "c_n", "grid_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.jl_family not in FAMILIES:
            raise ValueError(f"jl_family must be one of {FAMILIES}")

    @property
    def delta_eff(self) -> float:
        """Confidence after the internal normalization delta < min(eps/2, rho)."""
        return min(self.delta, self.eps / 2.0, self.rho)

    def constants_for(self, which: str) -> dict:
        defaults = config.ALGO_CONSTANTS[which]
        return {
            name: getattr(self, name) if getattr(self, name) is not None else defaults[name]
            for name in ("c1", "c2", "c3", "c4")
        }

    @classmethod
    def for_algo(cls, which: str, eps: float, tau: float, rho: float, delta: float, **overrides) -> "LearnParams":
        """Parameters with the calibrated knob bundle for one algorithm."""
        if which not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {which!r}")
        kw = dict(config.ALGO_KNOBS[which])
        kw.update(overrides)
        return cls(eps=eps, tau=tau, rho=rho, delta=delta, **kw)


class Sizes2(NamedTuple):
    k: int
    B: int
    n: int
    beta: float


class Sizes3(NamedTuple):
    k: int
    n: int


def log_term(params: LearnParams) -> float:
    """Shared logarithm ln(1/(eps*tau*rho*delta)) with the normalized delta."""
    return math.log(1.0 / (params.eps * params.tau * params.rho * params.delta_eff))


def _ball_volume(k: int) -> float:
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


def derive_sizes(params: LearnParams, which: str) -> Union[Sizes2, Sizes3]:
    """Integer sizes for one algorithm, with budget enforcement.

    algo2: k = c1 t^-2 L, B = c2 t^-4 r^-2 L, n = c3 e^-1 t^-3 L, beta = c4 t / L
    algo4: n = c1 e^-2 t^-2 L, B = c2 t^-4 r^-2 L, k = c3 t^-2 L, beta = c4 t / L
    algo3: k = c1 t^-2 L, n = c3 e^-1 t^-4 r^-2 L
    (t = tau, e = eps, r = rho, L the shared log with normalized delta;
    all counts take ceilings.)
    """
    if which not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {which!r}")
    c = params.constants_for(which)
    eps, tau, rho = params.eps, params.tau, params.rho
    L = log_term(params)

    if which == "algo3":
        k = math.ceil(c["c1"] * tau**-2 * L)
        n = math.ceil(c["c3"] * eps**-1 * tau**-4 * rho**-2 * L)
        if n > params.max_total_samples:
            raise BudgetExceeded("total samples", n, params.max_total_samples)
        spacing = tau / 20.0
        est_net = (2.0 * math.sqrt(k) / spacing) ** k * (_ball_volume(k) / 2.0**k)
        if est_net > 1.25 * params.net_max_points:
            raise BudgetExceeded("net points (estimated)", est_net, params.net_max_points)
        return Sizes3(k=k, n=n)

    if which == "algo2":
        k = math.ceil(c["c1"] * tau**-2 * L)
        B = math.ceil(c["c2"] * tau**-4 * rho**-2 * L)
        n = math.ceil(c["c3"] * eps**-1 * tau**-3 * L)
    else:
        n = math.ceil(c["c1"] * eps**-2 * tau**-2 * L)
        B = math.ceil(c["c2"] * tau**-4 * rho**-2 * L)
        k = math.ceil(c["c3"] * tau**-2 * L)
    beta = c["c4"] * tau / L
    if B > params.max_batches:
        raise BudgetExceeded("batches", B, params.max_batches)
    if B * n > params.max_total_samples:
        raise BudgetExceeded("total samples", B * n, params.max_total_samples)
    return Sizes2(k=k, B=B, n=n, beta=beta)


@dataclass
class LearnerOutput:
    """Hypothesis plus the discrete token whose equality defines replicability."""

    hypothesis: Halfspace
    canonical: Union[GridPoint, int]
    transcript: tuple

    @property
    def token(self) -> str:
        return token_str(self.canonical)


def token_str(canonical: Union[GridPoint, int]) -> str:
    """Stable text form of a canonical token."""
    if isinstance(canonical, GridPoint):
        return "grid:" + ",".join(str(c) for c in canonical.coords)
    return f"net:{int(canonical)}"


def _normalize_or_axis(v: np.ndarray) -> np.ndarray:
    """Unit-normalize; degenerate inputs map to the first axis vector."""
    nrm = float(np.linalg.norm(v))
    if nrm < _TINY:
        out = np.zeros(v.size)
        out[0] = 1.0
        return out
    return v / nrm


def _batch_margin(w: np.ndarray, batch: Dataset) -> float:
    norms = np.linalg.norm(batch.x, axis=1)
    return float(np.min(batch.y * (batch.x @ w) / norms))


def _project_round_tail(
    which: str,
    z: np.ndarray,
    k: int,
    beta: float,
    params: LearnParams,
    seed: SharedSeed,
    eval_batch: Dataset,
    extra_transcript: tuple = (),
) -> LearnerOutput:
    """Shared tail of algo2/algo4: JL projection, grid rounding, lift back.

    Consumption schedule from the shared seed: the JL matrix first
    (row-major), then the k offsets, then the k thresholds, each from
    its own named stream.
    """
    d = z.size
    jl_stream = derive_stream(seed, (which, "jl"))
    off_stream = derive_stream(seed, (which, "offsets"))
    thr_stream = derive_stream(seed, (which, "thresholds"))
    a = sample_jl(jl_stream, k, d, params.jl_family)
    az = project(a, z)
    grid = make_grid(k, beta, off_stream, thr_stream)
    pt = ak_round(az, grid)
    lifted = a.entries.T @ value(pt)
    w_hat = _normalize_or_axis(lifted)
    transcript = extra_transcript + (jl_stream.label_str, off_stream.label_str, thr_stream.label_str)
    hyp = Halfspace(w_hat, _batch_margin(w_hat, eval_batch))
    return LearnerOutput(hyp, pt, transcript)


def algo2(data_source, params: LearnParams, seed: SharedSeed) -> LearnerOutput:
    """Batch-SVM averaging learner with shared project-and-round tail."""
    szs = derive_sizes(params, "algo2")
    d = data_source.dim
    target = params.tau / 2.0
    ws = np.empty((szs.B, d))
    first_batch = None
    for i in range(szs.B):
        batch = data_source.draw(szs.n)
        if first_batch is None:
            first_batch = batch
        try:
            ws[i] = svm_margin(batch, target, budget=params.svm_budget).w
        except InfeasibleMargin as exc:
            raise exc.with_batch(i) from None
    z = ws.mean(axis=0)
    return _project_round_tail("algo2", z, szs.k, szs.beta, params, seed, first_batch)


def algo4(data_source, params: LearnParams, seed: SharedSeed) -> LearnerOutput:
    """Boosted-SGD batch learner with the same project-and-round tail.

    Every batch is feature-normalized, then all B * reps SGD runs share
    one vectorized step loop.  Per-batch randomness comes from streams
    labeled (algo4, batch, i, boost), with repetition r reading its
    index sequence from child("rep", r) -- identical to what a loop of
    boost_sgd calls would consume, so the fast path is exactly the
    reference path.
    """
    szs = derive_sizes(params, "algo4")
    d = data_source.dim
    B, n = szs.B, szs.n
    if n < 2:
        raise BudgetExceeded("batch size", n, 2)
    eps_inner = params.eps / 10.0
    delta_inner = params.delta_eff / B
    sp = SurrogateParams(tau=params.tau, eps=eps_inner)
    T, reps = boost_plan(eps_inner, params.tau, delta_inner, params.c_t, params.c_n, params.sgd_iter_cap)
    half = n // 2
    rest = n - half

    train_x = np.empty((B * half, d))
    train_y = np.empty(B * half, dtype=np.int64)
    est_x = np.empty((B * rest, d))
    est_y = np.empty(B * rest, dtype=np.int64)
    first_batch = None
    batch_labels = []
    idx = np.empty((T - 1, B * reps), dtype=np.int64)
    for i in range(B):
        batch = data_source.draw(n)
        xn = batch.x / np.linalg.norm(batch.x, axis=1)[:, None]
        if first_batch is None:
            first_batch = Dataset(xn, batch.y, batch.tau)
        train_x[i * half : (i + 1) * half] = xn[:half]
        train_y[i * half : (i + 1) * half] = batch.y[:half]
        est_x[i * rest : (i + 1) * rest] = xn[half:]
        est_y[i * rest : (i + 1) * rest] = batch.y[half:]
        boost_stream = derive_stream(seed, ("algo4", "batch", i, "boost"))
        batch_labels.append(boost_stream.label_str)
        for r in range(reps):
            idx[:, i * reps + r] = boost_stream.child("rep", r).integers(half, size=T - 1)

    row_base = np.repeat(np.arange(B, dtype=np.int64) * half, reps)
    W = _sgd_surrogate_stack(train_x, train_y, row_base, half, sp, T, idx)

    ws = np.empty((B, d))
    for i in range(B):
        ws[i] = _select_candidate(
            W[i * reps : (i + 1) * reps],
            est_x[i * rest : (i + 1) * rest],
            est_y[i * rest : (i + 1) * rest],
            sp,
        )
    z = ws.mean(axis=0)
    return _project_round_tail(
        "algo4", z, szs.k, szs.beta, params, seed, first_batch, tuple(batch_labels)
    )


_NET_TOL = 1.0 + 1e-9


def _lattice_parts(k: int, spacing: float) -> tuple:
    """Slab axis plus lex-ordered trailing lattice block shared by
    build_net and lattice_risks; identical floats in both places."""
    pitch = spacing / math.sqrt(k)
    m = math.floor(1.0 / pitch + 1e-12)
    axis = (np.arange(2 * m + 1, dtype=np.float64) - m) * pitch
    if k == 1:
        rest = np.zeros((1, 0))
    else:
        grids = np.meshgrid(*([axis] * (k - 1)), indexing="ij")
        rest = np.stack([g.ravel() for g in grids], axis=1)
    rest_sq = (rest * rest).sum(axis=1)
    return axis, rest, rest_sq


@lru_cache(maxsize=8)
def _net_cached(k: int, spacing: float, max_points: int) -> np.ndarray:
    pitch = spacing / math.sqrt(k)
    m = math.floor(1.0 / pitch + 1e-12)
    est = (2 * m + 1) ** k * (_ball_volume(k) / 2.0**k)
    if est > 1.25 * max_points:
        raise BudgetExceeded("net points (estimated)", est, max_points)

    axis, rest, rest_sq = _lattice_parts(k, spacing)
    blocks = []
    for c1 in axis:
        mask = c1 * c1 + rest_sq <= _NET_TOL
        if mask.any():
            block = np.empty((int(mask.sum()), k))
            block[:, 0] = c1
            block[:, 1:] = rest[mask]
            blocks.append(block)
    net = np.concatenate(blocks, axis=0)
    if net.shape[0] > max_points:
        raise BudgetExceeded("net points", net.shape[0], max_points)
    net.setflags(write=False)
    return net


def build_net(k: int, spacing: float, max_points: int = config.NET_MAX_POINTS) -> np.ndarray:
    """Axis-aligned lattice of pitch spacing/sqrt(k), kept inside the
    closed unit ball, in ascending lexicographic coordinate order.

    Any unit vector has a net point within distance spacing: shrink it
    by spacing/2 and snap each coordinate; the snapped point stays in
    the ball and moves by at most spacing/2 more.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (0 < spacing <= 1):
        raise ValueError(f"spacing must be in (0, 1], got {spacing}")
    return _net_cached(int(k), float(spacing), int(max_points))


def empirical_risks(H: np.ndarray, X: np.ndarray, y: np.ndarray, chunk: int = config.RISK_CHUNK) -> np.ndarray:
    """0-1 risk of every hypothesis row of H on (X, y); sign(0) is an error.

    Returned risks are exact rationals count/n, so downstream bucketing
    is stable.
    """
    H = np.asarray(H, dtype=np.float64)
    X = np.asarray(X)
    n = X.shape[0]
    signed = y[:, None] * X
    counts = np.empty(H.shape[0], dtype=np.int64)
    for start in range(0, H.shape[0], chunk):
        s = H[start : start + chunk] @ signed.T
        counts[start : start + chunk] = (s <= 0.0).sum(axis=1)
    return counts / float(n)


def lattice_risks(k: int, spacing: float, X: np.ndarray, y: np.ndarray, *, block: int = 2048) -> np.ndarray:
    """Empirical 0-1 risks of every build_net(k, spacing) point, in net
    row order, without materializing the full score matrix.

    A net point (c1, r) errs on sample i when c1 * a_i + r . b_i <= 0
    with (a_i, b_i) the signed sample split the same way.  For fixed r
    that condition is one-sided in c1, so each sample contributes a
    threshold; counts per slab come from binning thresholds against the
    slab axis.  Counts agree with empirical_risks on the same net up to
    ties created by float64 evaluation order.
    """
    axis, rest, rest_sq = _lattice_parts(k, spacing)
    # rows outside the unit disk never meet the ball mask for any slab
    keep = rest_sq <= _NET_TOL
    rest, rest_sq = rest[keep], rest_sq[keep]
    n = X.shape[0]
    signed = y[:, None] * np.asarray(X, dtype=np.float64)
    a = signed[:, 0]
    bd = signed[:, 1:]
    pos = a > 0
    neg = a < 0
    zer = ~(pos | neg)
    s_cnt = axis.size
    r_cnt = rest.shape[0]
    # the axis is a uniform grid, so bin arithmetically instead of
    # binary-searching: scale puts slab boundaries at the integers
    pitch = spacing / math.sqrt(k)
    lo = axis[0]
    counts = np.zeros((r_cnt, s_cnt), dtype=np.int64)
    npos = int(pos.sum())
    for start in range(0, r_cnt, block):
        rb = rest[start : start + block] @ bd.T  # (m, n)
        m = rb.shape[0]
        offs = (np.arange(m, dtype=np.int64) * (s_cnt + 1))[:, None]
        acc = np.zeros((m, s_cnt + 1), dtype=np.int64)
        if npos:
            # c1 * a + r.b <= 0  <=>  c1 <= -r.b / a; slabs 0..j-1 qualify
            # with j = #axis <= threshold = floor(scaled) + 1
            j = np.floor((-rb[:, pos] / a[pos] - lo) / pitch) + 1.0
            j = np.clip(j, 0.0, s_cnt + 0.0).astype(np.int64)
            hist = np.bincount((j + offs).ravel(), minlength=m * (s_cnt + 1))
            acc -= np.cumsum(hist.reshape(m, s_cnt + 1), axis=1)
            acc += npos
        if neg.any():
            # flipped inequality: slabs j..end with j = #axis < threshold
            j = np.ceil((-rb[:, neg] / a[neg] - lo) / pitch)
            j = np.clip(j, 0.0, s_cnt + 0.0).astype(np.int64)
            hist = np.bincount((j + offs).ravel(), minlength=m * (s_cnt + 1))
            acc += np.cumsum(hist.reshape(m, s_cnt + 1), axis=1)
        if zer.any():
            acc += (rb[:, zer] <= 0.0).sum(axis=1)[:, None]
        counts[start : start + block] = acc[:, :s_cnt]
    out = []
    for si in range(s_cnt):
        mask = axis[si] * axis[si] + rest_sq <= _NET_TOL
        if mask.any():
            out.append(counts[mask, si])
    return np.concatenate(out) / float(n)


def finite_rlearner(
    S: Dataset,
    H: np.ndarray,
    eps: float,
    rho: float,
    delta: float,
    stream: RandomStream,
    *,
    grid_scale: float = config.GRID_SCALE,
    chunk: int = config.RISK_CHUNK,
    risks: Optional[np.ndarray] = None,
) -> int:
    """Replicable empirical-risk selection over a finite hypothesis list.

    Scores every hypothesis, rounds all risks down to the shared grid
    theta + width*Z (theta drawn once from the stream, width =
    grid_scale * eps), and returns the smallest index attaining the
    minimal rounded risk.  Shared theta makes the selection identical
    across executions whenever the risk estimates stay within the same
    bucket; rho and delta are met through the caller's sample size.

    Callers that already hold the empirical risks of H on S (e.g. from
    lattice_risks) can pass them to skip the generic scoring pass.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] == 0:
        raise ValueError("H must be a nonempty (N, k) array")
    for name, v in (("eps", eps), ("rho", rho), ("delta", delta)):
        if not (0 < v < 1):
            raise ValueError(f"{name} must be in (0, 1), got {v}")
    if S.dim != H.shape[1]:
        raise ValueError(f"hypothesis dim {H.shape[1]} != sample dim {S.dim}")
    if risks is None:
        risks = empirical_risks(H, S.x, S.y, chunk=chunk)
    elif len(risks) != H.shape[0]:
        raise ValueError("risks length does not match H")
    width = grid_scale * eps
    theta = stream.uniform(0.0, width)
    buckets = np.floor((risks - theta) / width)
    return int(np.argmax(buckets == buckets.min()))


def algo3(data_source, params: LearnParams, seed: SharedSeed) -> LearnerOutput:
    """Project-once net learner: token = index into the fixed lattice net."""
    szs = derive_sizes(params, "algo3")
    d = data_source.dim
    batch = data_source.draw(szs.n)
    jl_stream = derive_stream(seed, ("algo3", "jl"))
    a = sample_jl(jl_stream, szs.k, d, params.jl_family)
    projected = Dataset(project_rows(a, batch.x), batch.y, batch.tau)
    spacing = params.tau / 20.0
    net = build_net(szs.k, spacing, max_points=params.net_max_points)
    risks = lattice_risks(szs.k, spacing, projected.x, projected.y)
    sel_stream = derive_stream(seed, ("algo3", "select"))
    b_idx = finite_rlearner(
        projected,
        net,
        params.eps,
        params.rho,
        params.delta_eff,
        sel_stream,
        grid_scale=params.grid_scale,
        risks=risks,
    )
    lifted = a.entries.T @ net[b_idx]
    w_hat = _normalize_or_axis(lifted)
    hyp = Halfspace(w_hat, _batch_margin(w_hat, batch))
    return LearnerOutput(hyp, int(b_idx), (jl_stream.label_str, sel_stream.label_str))
