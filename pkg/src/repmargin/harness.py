"""Experiment harness: paired-run replicability studies, accuracy
studies, concentration-bound spot checks, and deterministic writers.

Per-trial randomness is derived from one master seed through named
streams, so a study is reproducible from (master_seed, trial index)
alone and its output files are byte-identical across repeats and
worker counts.  Wall-clock times are tracked in memory for profiling
but never serialized.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from repmargin.data import (
    LAW_SPHERE,
    MarginSpec,
    SyntheticSource,
    error_rate,
    gen_dataset,
    random_unit_vector,
)
from repmargin.learners import BudgetExceeded, LearnParams, algo2, algo3, algo4
from repmargin.margin_solvers import InfeasibleMargin
from repmargin.projection import GAUSSIAN, sample_jl, project
from repmargin.randomness import RandomStream, SharedSeed, _as_seed, derive_stream
from repmargin.rounding import _round_coords

_REGISTRY = {"algo2": algo2, "algo3": algo3, "algo4": algo4}

_Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    p = successes / trials
    zz = z * z
    denom = 1.0 + zz / trials
    center = (p + zz / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + zz / (4.0 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return (lo, hi)


@dataclass
class TrialRecord:
    algorithm: str
    trial: int
    tokens_equal: Optional[bool]
    errors: tuple
    tokens: tuple
    failure: Optional[str] = None
    wall_time: float = 0.0  # profiling only, never serialized

    def to_record(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "trial": self.trial,
            "tokens_equal": self.tokens_equal,
            "errors": list(self.errors),
            "tokens": list(self.tokens),
            "failure": self.failure,
        }


@dataclass
class ExperimentSummary:
    kind: str
    algorithm: str
    trials: int
    completed: int
    failures: int
    disagreements: int
    rate: float
    wilson_lo: float
    wilson_hi: float
    mean_error: float
    max_error: float
    pass_fraction: float
    params: dict
    records: list

    def to_record(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "kind", "algorithm", "trials", "completed", "failures",
            "disagreements", "rate", "wilson_lo", "wilson_hi",
            "mean_error", "max_error", "pass_fraction",
        )}
        out["params"] = dict(sorted(self.params.items()))
        return out


def _params_echo(params: LearnParams, extra: dict) -> dict:
    echo = {
        "eps": params.eps,
        "tau": params.tau,
        "rho": params.rho,
        "delta": params.delta,
        "delta_eff": params.delta_eff,
    }
    echo.update(extra)
    return echo


def _resolve(algorithm: Union[str, Callable]) -> tuple:
    if callable(algorithm):
        return getattr(algorithm, "__name__", "custom"), algorithm
    try:
        return algorithm, _REGISTRY[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}") from None


def _trial_spec(master: SharedSeed, trial: int, dim: int, tau: float, law: str) -> MarginSpec:
    w_star = random_unit_vector(dim, derive_stream(master, ("trial", trial, "wstar")))
    return MarginSpec(dim=dim, tau=tau, w_star=w_star, law=law)


def _trial_shared_seed(master: SharedSeed, trial: int) -> SharedSeed:
    return SharedSeed(int(derive_stream(master, ("trial", trial, "shared")).raw(1)[0]))


def _replicability_trial(
    name: str,
    fn: Callable,
    params: LearnParams,
    master: SharedSeed,
    trial: int,
    dim: int,
    law: str,
    test_size: int,
) -> TrialRecord:
    spec = _trial_spec(master, trial, dim, params.tau, law)
    shared = _trial_shared_seed(master, trial)
    t0 = time.perf_counter()
    try:
        out1 = fn(SyntheticSource(spec, derive_stream(master, ("trial", trial, "data1"))), params, shared)
        out2 = fn(SyntheticSource(spec, derive_stream(master, ("trial", trial, "data2"))), params, shared)
    except (InfeasibleMargin, BudgetExceeded) as exc:
        return TrialRecord(name, trial, None, (), (), failure=f"{type(exc).__name__}: {exc}",
                           wall_time=time.perf_counter() - t0)
    test = gen_dataset(spec, test_size, derive_stream(master, ("trial", trial, "test")))
    errors = (error_rate(out1.hypothesis, test), error_rate(out2.hypothesis, test))
    return TrialRecord(
        name, trial, out1.token == out2.token, errors, (out1.token, out2.token),
        wall_time=time.perf_counter() - t0,
    )


def _accuracy_trial(
    name: str,
    fn: Callable,
    params: LearnParams,
    master: SharedSeed,
    trial: int,
    dim: int,
    law: str,
    test_size: int,
) -> TrialRecord:
    spec = _trial_spec(master, trial, dim, params.tau, law)
    shared = _trial_shared_seed(master, trial)
    t0 = time.perf_counter()
    try:
        out = fn(SyntheticSource(spec, derive_stream(master, ("trial", trial, "data1"))), params, shared)
    except (InfeasibleMargin, BudgetExceeded) as exc:
        return TrialRecord(name, trial, None, (), (), failure=f"{type(exc).__name__}: {exc}",
                           wall_time=time.perf_counter() - t0)
    test = gen_dataset(spec, test_size, derive_stream(master, ("trial", trial, "test")))
    return TrialRecord(
        name, trial, None, (error_rate(out.hypothesis, test),), (out.token,),
        wall_time=time.perf_counter() - t0,
    )


def _pool_replicability(args) -> TrialRecord:
    name, params, master_value, trial, dim, law, test_size = args
    return _replicability_trial(
        name, _REGISTRY[name], params, SharedSeed(master_value), trial, dim, law, test_size
    )


def _pool_accuracy(args) -> TrialRecord:
    name, params, master_value, trial, dim, law, test_size = args
    return _accuracy_trial(
        name, _REGISTRY[name], params, SharedSeed(master_value), trial, dim, law, test_size
    )


def _run_trials(worker, pool_worker, name, fn, params, master, trials, dim, law, test_size, workers):
    if workers <= 1:
        return [worker(name, fn, params, master, t, dim, law, test_size) for t in range(trials)]
    if name not in _REGISTRY:
        raise ValueError("parallel execution supports built-in algorithms only")
    args = [(name, params, master.value, t, dim, law, test_size) for t in range(trials)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(pool_worker, args))
    return records


def _summarize(kind, name, params, records, eps, extra) -> ExperimentSummary:
    trials = len(records)
    failures = sum(1 for r in records if r.failure is not None)
    completed = trials - failures
    errors = [e for r in records for e in r.errors]
    mean_err = float(np.mean(errors)) if errors else float("nan")
    max_err = float(np.max(errors)) if errors else float("nan")
    if kind == "replicability":
        # failed trials count against replicability
        disagreements = failures + sum(1 for r in records if r.tokens_equal is False)
        rate = disagreements / trials if trials else float("nan")
        lo, hi = wilson_interval(disagreements, trials)
        pass_fraction = float("nan")
    else:
        disagreements = 0
        passes = sum(1 for r in records if r.errors and r.errors[0] <= eps)
        rate = float("nan")
        pass_fraction = passes / trials if trials else float("nan")
        lo, hi = wilson_interval(passes, trials)
    return ExperimentSummary(
        kind=kind, algorithm=name, trials=trials, completed=completed,
        failures=failures, disagreements=disagreements, rate=rate,
        wilson_lo=lo, wilson_hi=hi, mean_error=mean_err, max_error=max_err,
        pass_fraction=pass_fraction, params=_params_echo(params, extra),
        records=records,
    )


def replicability_experiment(
    algorithm: Union[str, Callable],
    params: LearnParams,
    trials: int,
    master_seed: Union[SharedSeed, int],
    *,
    dim: int,
    law: str = LAW_SPHERE,
    test_size: int = 4000,
    workers: int = 1,
) -> ExperimentSummary:
    """Run the learner twice per trial on independent datasets with a
    shared per-trial seed and count token disagreements.

    Failed trials (infeasible margins, blown budgets) are counted as
    disagreements: an execution that errors is not replicable.
    """
    master_seed = _as_seed(master_seed)
    name, fn = _resolve(algorithm)
    records = _run_trials(
        _replicability_trial, _pool_replicability, name, fn, params,
        master_seed, trials, dim, law, test_size, workers,
    )
    extra = {"dim": dim, "law": law, "test_size": test_size, "master_seed": master_seed.value}
    return _summarize("replicability", name, params, records, params.eps, extra)


def accuracy_experiment(
    algorithm: Union[str, Callable],
    params: LearnParams,
    trials: int,
    master_seed: Union[SharedSeed, int],
    *,
    dim: int,
    law: str = LAW_SPHERE,
    test_size: int = 4000,
    workers: int = 1,
) -> ExperimentSummary:
    """One run per trial; pass_fraction = share of trials with test error <= eps."""
    master_seed = _as_seed(master_seed)
    name, fn = _resolve(algorithm)
    records = _run_trials(
        _accuracy_trial, _pool_accuracy, name, fn, params,
        master_seed, trials, dim, law, test_size, workers,
    )
    extra = {"dim": dim, "law": law, "test_size": test_size, "master_seed": master_seed.value}
    return _summarize("accuracy", name, params, records, params.eps, extra)


class LemmaCheck(NamedTuple):
    name: str
    observed: float
    bound: float
    passed: bool
    note: str = ""


def _mc_round_values(z: np.ndarray, beta: float, stream: RandomStream, n_mc: int) -> np.ndarray:
    """Round z on n_mc freshly drawn grids at once; returns (n_mc, k) values."""
    k = z.size
    offsets = stream.uniform(0.0, beta, size=n_mc * k).reshape(n_mc, k)
    thresholds = stream.uniform(0.0, 1.0, size=n_mc * k).reshape(n_mc, k)
    coords = _round_coords(z, offsets, thresholds, beta)
    return offsets + coords * beta


def _check_round_stability(stream: RandomStream, n_mc: int) -> list:
    """Disagreement of paired roundings at L1 distance r * beta: bound 2r."""
    k, beta = 64, 0.1
    z = stream.uniform(-1.0, 1.0, size=k)
    checks = []
    for r in (0.01, 0.05, 0.2):
        delta = np.full(k, r * beta / k)
        delta[::2] *= -1.0
        offsets = stream.uniform(0.0, beta, size=n_mc * k).reshape(n_mc, k)
        thresholds = stream.uniform(0.0, 1.0, size=n_mc * k).reshape(n_mc, k)
        c1 = _round_coords(z, offsets, thresholds, beta)
        c2 = _round_coords(z + delta, offsets, thresholds, beta)
        observed = float(np.mean(np.any(c1 != c2, axis=1)))
        slack = 3.0 * math.sqrt(0.25 / n_mc)
        checks.append(LemmaCheck(
            f"round-stability-r{r}", observed, 2.0 * r + slack,
            observed <= 2.0 * r + slack,
            f"L1 shift {r}*beta across {k} coords",
        ))
    return checks


def _check_round_tail(stream: RandomStream, n_mc: int) -> list:
    """Deviation of <rounded - z, x> for unit x: bound 2 exp(-2 a^2 / beta^2)."""
    k, beta = 64, 0.1
    z = stream.uniform(-1.0, 1.0, size=k)
    x = np.full(k, 1.0 / math.sqrt(k))
    vals = _mc_round_values(z, beta, stream, n_mc)
    dev = np.abs((vals - z) @ x)
    checks = []
    for alpha in (0.05, 0.1):
        bound = 2.0 * math.exp(-2.0 * alpha * alpha / (beta * beta))
        observed = float(np.mean(dev > alpha))
        slack = 3.0 * math.sqrt(0.25 / n_mc)
        checks.append(LemmaCheck(
            f"round-tail-a{alpha}", observed, min(1.0, bound) + slack,
            observed <= min(1.0, bound) + slack,
            "Hoeffding tail of the rounding residual",
        ))
    return checks


def _check_round_unbiased(stream: RandomStream, n_mc: int) -> list:
    k, beta = 8, 0.1
    z = stream.uniform(-1.0, 1.0, size=k)
    vals = _mc_round_values(z, beta, stream, n_mc)
    observed = float(np.max(np.abs(vals.mean(axis=0) - z)))
    bound = 4.0 * (beta / 2.0) / math.sqrt(n_mc)
    return [LemmaCheck("round-unbiased", observed, bound, observed <= bound,
                       "per-coordinate mean of rounded values")]


def _check_jl_norm(stream: RandomStream, n_mc: int) -> list:
    """Norm distortion of a fixed unit vector: bound 2 exp(-k eps^2 / 8)."""
    k, d, eps = 600, 6, 0.2
    x = random_unit_vector(d, stream)
    fails = 0
    for _ in range(n_mc):
        a = sample_jl(stream, k, d, GAUSSIAN)
        ax = project(a, x)
        if abs(float(ax @ ax) - 1.0) > eps:
            fails += 1
    observed = fails / n_mc
    bound = 2.0 * math.exp(-k * eps * eps / 8.0)
    slack = 4.0 * math.sqrt(max(bound, 1.0 / n_mc) / n_mc)
    return [LemmaCheck("jl-norm", observed, bound + slack, observed <= bound + slack,
                       f"k={k}, eps={eps}, {n_mc} fresh matrices")]


def _check_jl_inner(stream: RandomStream, n_mc: int) -> list:
    """Inner products after projection: bound 4 exp(-k eps^2 / 8) via z +- x."""
    k, d, eps = 600, 6, 0.2
    x = random_unit_vector(d, stream)
    z = random_unit_vector(d, stream)
    true = float(z @ x)
    fails = 0
    for _ in range(n_mc):
        a = sample_jl(stream, k, d, GAUSSIAN)
        approx = float(project(a, z) @ project(a, x))
        if abs(approx - true) > eps:
            fails += 1
    observed = fails / n_mc
    bound = 4.0 * math.exp(-k * eps * eps / 8.0)
    slack = 4.0 * math.sqrt(max(bound, 1.0 / n_mc) / n_mc)
    return [LemmaCheck("jl-inner", observed, bound + slack, observed <= bound + slack,
                       f"k={k}, eps={eps}, {n_mc} fresh matrices")]


def _check_jl_pairwise(stream: RandomStream, n_mc: int) -> list:
    """All norms of a 20-vector set preserved: union bound over the set."""
    k, d, eps, m = 600, 6, 0.5, 20
    xs = np.stack([random_unit_vector(d, stream) for _ in range(m)])
    fails = 0
    for _ in range(n_mc):
        a = sample_jl(stream, k, d, GAUSSIAN)
        proj = xs @ a.entries.T
        dist = np.abs((proj * proj).sum(axis=1) - 1.0)
        if float(dist.max()) > eps:
            fails += 1
    observed = fails / n_mc
    bound = min(1.0, m * 2.0 * math.exp(-k * eps * eps / 8.0))
    slack = 4.0 * math.sqrt(max(bound, 1.0 / n_mc) / n_mc)
    return [LemmaCheck("jl-set", observed, bound + slack, observed <= bound + slack,
                       f"{m} unit vectors, eps={eps}")]


def _check_vector_bernstein(stream: RandomStream, n_mc: int) -> list:
    """Mean of B bounded i.i.d. vectors: bound exp(-t^2 B / 32 + 1/4)."""
    d, B, t = 10, 400, 0.2
    fails = 0
    for _ in range(n_mc):
        g = stream.gaussian(size=B * d).reshape(B, d)
        g /= np.linalg.norm(g, axis=1)[:, None]
        if float(np.linalg.norm(g.mean(axis=0))) >= t:
            fails += 1
    observed = fails / n_mc
    bound = math.exp(-t * t * B / 32.0 + 0.25)
    return [LemmaCheck("vector-bernstein", observed, bound, observed <= bound,
                       f"B={B} unit vectors, deviation {t}")]


def _check_negative_control(stream: RandomStream, n_mc: int) -> list:
    """Deliberately false claim; detecting the violation is the pass."""
    k, beta, r = 64, 0.1, 0.2
    z = stream.uniform(-1.0, 1.0, size=k)
    delta = np.full(k, r * beta / k)
    offsets = stream.uniform(0.0, beta, size=n_mc * k).reshape(n_mc, k)
    thresholds = stream.uniform(0.0, 1.0, size=n_mc * k).reshape(n_mc, k)
    c1 = _round_coords(z, offsets, thresholds, beta)
    c2 = _round_coords(z + delta, offsets, thresholds, beta)
    observed = float(np.mean(np.any(c1 != c2, axis=1)))
    false_bound = 0.25 * r  # an eighth of the honest constant; must be violated
    return [LemmaCheck("negative-control", observed, false_bound, observed > false_bound,
                       "pass means the too-strong bound was caught failing")]


def lemma_suite(seed: Union[SharedSeed, int], *, n_mc: int = 20000, n_jl: int = 250) -> list:
    """Monte Carlo spot checks of every concentration bound the learners rely on.

    Each check passes when the observed frequency respects the stated
    bound (plus Monte Carlo slack); the negative control passes only by
    catching a deliberately false bound.
    """
    master = seed if isinstance(seed, SharedSeed) else SharedSeed(seed)
    checks = []
    checks += _check_round_stability(derive_stream(master, ("lemma", "stability")), n_mc)
    checks += _check_round_tail(derive_stream(master, ("lemma", "tail")), n_mc)
    checks += _check_round_unbiased(derive_stream(master, ("lemma", "unbiased")), n_mc)
    checks += _check_jl_norm(derive_stream(master, ("lemma", "jlnorm")), n_jl)
    checks += _check_jl_inner(derive_stream(master, ("lemma", "jlinner")), n_jl)
    checks += _check_jl_pairwise(derive_stream(master, ("lemma", "jlset")), n_jl)
    checks += _check_vector_bernstein(derive_stream(master, ("lemma", "bernstein")), 400)
    checks += _check_negative_control(derive_stream(master, ("lemma", "control")), n_mc)
    return checks


def lemmas_ok(checks: Sequence[LemmaCheck]) -> bool:
    return all(c.passed for c in checks)


def write_jsonl(records: Sequence[dict], path: str) -> None:
    """One JSON object per line, keys sorted; byte-stable given equal records."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def write_csv(records: Sequence[dict], path: str) -> None:
    """Flat CSV; list values joined with ';', column order sorted."""
    keys = sorted({k for rec in records for k in rec})
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for rec in records:
            row = {}
            for key in keys:
                v = rec.get(key)
                if isinstance(v, (list, tuple)):
                    row[key] = ";".join(repr(x) if isinstance(x, float) else str(x) for x in v)
                elif isinstance(v, dict):
                    row[key] = json.dumps(v, sort_keys=True)
                else:
                    row[key] = v
            writer.writerow(row)
