import json

import numpy as np
import pytest

from repmargin.data import Dataset, gen_dataset
from repmargin.harness import (
    LemmaCheck,
    TrialRecord,
    accuracy_experiment,
    lemma_suite,
    lemmas_ok,
    replicability_experiment,
    wilson_interval,
    write_csv,
    write_jsonl,
)
from repmargin.learners import LearnParams, LearnerOutput
from repmargin.margin_solvers import Halfspace, InfeasibleMargin
from repmargin.randomness import SharedSeed


def _params():
    return LearnParams(eps=0.15, tau=0.5, rho=0.2, delta=0.1,
                       c1=0.35, c2=0.01, c3=0.1, c4=2.0)


def _unit(d, j=0):
    w = np.zeros(d)
    w[j] = 1.0
    return w


def _stub_constant(source, params, seed):
    # consumes one batch, always emits the same token
    source.draw(4)
    return LearnerOutput(Halfspace(_unit(source.dim), 0.0), 7, ())


def _stub_data_driven(source, params, seed):
    # token depends on the dataset, so paired runs disagree often
    batch = source.draw(10)
    bit = int(np.sum(batch.x) * 1e6) % 2
    return LearnerOutput(Halfspace(_unit(source.dim), 0.0), bit, ())


def _stub_failing(source, params, seed):
    raise InfeasibleMargin(0.5, 0.0, 3)


def test_wilson_oracle_values():
    lo, hi = wilson_interval(0, 200)
    assert lo == 0.0
    assert hi == pytest.approx(0.018846, abs=1e-5)
    lo2, hi2 = wilson_interval(50, 100)
    assert lo2 < 0.5 < hi2
    assert wilson_interval(0, 0) == (0.0, 1.0)
    # monotone in successes
    assert wilson_interval(10, 100)[1] < wilson_interval(30, 100)[1]


def test_replicability_constant_stub():
    s = replicability_experiment(_stub_constant, _params(), 12, SharedSeed(1), dim=4,
                                 test_size=50)
    assert s.trials == 12
    assert s.disagreements == 0
    assert s.rate == 0.0
    assert s.wilson_hi < 0.3
    assert all(r.tokens_equal for r in s.records)


def test_replicability_data_driven_stub_disagrees():
    s = replicability_experiment(_stub_data_driven, _params(), 40, SharedSeed(2), dim=4,
                                 test_size=50)
    # coin-flip behavior: disagreement rate near 1/2
    assert 0.25 <= s.rate <= 0.75


def test_replicability_failures_count_as_disagreements():
    s = replicability_experiment(_stub_failing, _params(), 5, SharedSeed(3), dim=4,
                                 test_size=50)
    assert s.failures == 5
    assert s.disagreements == 5
    assert s.rate == 1.0
    assert all(r.failure is not None for r in s.records)


def test_accuracy_oracle_stub():
    # a stub returning the trial's true separator must pass every trial
    def stub_truth(source, params, seed):
        source.draw(2)
        w = source.spec.w_star
        return LearnerOutput(Halfspace(w, 1.0), 0, ())

    s = accuracy_experiment(stub_truth, _params(), 10, SharedSeed(4), dim=6,
                            test_size=400)
    assert s.pass_fraction == 1.0
    assert s.mean_error == 0.0


def test_accuracy_anti_truth_fails_every_trial():
    def stub_anti(source, params, seed):
        source.draw(2)
        return LearnerOutput(Halfspace(-source.spec.w_star, 0.0), 0, ())

    s = accuracy_experiment(stub_anti, _params(), 12, SharedSeed(5), dim=8,
                            test_size=400)
    assert s.mean_error == 1.0
    assert s.pass_fraction == 0.0
    lo, hi = s.wilson_lo, s.wilson_hi
    assert lo == 0.0 and hi < 0.3


def test_experiment_deterministic_records():
    a = replicability_experiment(_stub_data_driven, _params(), 8, SharedSeed(6), dim=4,
                                 test_size=50)
    b = replicability_experiment(_stub_data_driven, _params(), 8, SharedSeed(6), dim=4,
                                 test_size=50)
    assert [r.to_record() for r in a.records] == [r.to_record() for r in b.records]
    assert [r.trial for r in a.records] == list(range(8))


def test_parallel_matches_serial(tmp_path):
    p = _params()
    serial = replicability_experiment("algo2", p, 4, SharedSeed(7), dim=5, test_size=50)
    parallel = replicability_experiment("algo2", p, 4, SharedSeed(7), dim=5, test_size=50,
                                        workers=2)
    ra = [r.to_record() for r in serial.records]
    rb = [r.to_record() for r in parallel.records]
    assert ra == rb
    f1, f2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_jsonl(ra, str(f1))
    write_jsonl(rb, str(f2))
    assert f1.read_bytes() == f2.read_bytes()


def test_parallel_rejects_custom_callable():
    with pytest.raises(ValueError):
        replicability_experiment(_stub_constant, _params(), 2, SharedSeed(8), dim=4,
                                 workers=2)


def test_record_serialization_excludes_wall_time(tmp_path):
    rec = TrialRecord("algo2", 0, True, (0.1,), ("grid:1",), wall_time=123.4)
    d = rec.to_record()
    assert "wall_time" not in d
    path = tmp_path / "r.jsonl"
    write_jsonl([d], str(path))
    text = path.read_text()
    assert "wall_time" not in text
    assert json.loads(text.splitlines()[0])["tokens"] == ["grid:1"]


def test_write_csv_flattens(tmp_path):
    path = tmp_path / "r.csv"
    write_csv([{"b": [1.0, 2.0], "a": 1, "c": {"k": 3}}], str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,c"
    assert "1.0;2.0" in lines[1]


def test_unknown_algorithm_rejected():
    with pytest.raises(ValueError):
        replicability_experiment("algo7", _params(), 2, SharedSeed(9), dim=4)


def test_lemma_suite_fast():
    checks = lemma_suite(SharedSeed(0), n_mc=4000, n_jl=40)
    names = [c.name for c in checks]
    assert "round-unbiased" in names
    assert "vector-bernstein" in names
    assert "negative-control" in names
    for c in checks:
        assert c.passed, f"{c.name}: observed {c.observed} bound {c.bound}"
    assert lemmas_ok(checks)


def test_lemma_suite_deterministic():
    a = lemma_suite(SharedSeed(1), n_mc=2000, n_jl=20)
    b = lemma_suite(SharedSeed(1), n_mc=2000, n_jl=20)
    assert a == b


def test_lemmas_ok_flags_failure():
    good = LemmaCheck("x", 0.1, 0.2, True)
    bad = LemmaCheck("y", 0.3, 0.2, False)
    assert lemmas_ok([good])
    assert not lemmas_ok([good, bad])
