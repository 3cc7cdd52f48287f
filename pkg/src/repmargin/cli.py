"""Command line front end.

Subcommands: gen-data, run, replicability, accuracy, lemmas, calibrate.
Exit status is 0 only when every check the invocation requested passed.
"""

from __future__ import annotations

import argparse
import json
import sys

from repmargin.data import (
    LAW_CLUSTER,
    LAW_SPHERE,
    DatasetFormatError,
    FixedSource,
    MarginSpec,
    SyntheticSource,
    error_rate,
    gen_dataset,
    load_dataset,
    random_unit_vector,
    save_dataset,
)
from repmargin.harness import (
    accuracy_experiment,
    lemma_suite,
    lemmas_ok,
    replicability_experiment,
    write_csv,
    write_jsonl,
)
from repmargin.harness import _REGISTRY
from repmargin.learners import (
    ALGORITHMS,
    BudgetExceeded,
    LearnParams,
    derive_sizes,
)
from repmargin.margin_solvers import InfeasibleMargin
from repmargin.randomness import SharedSeed, derive_stream


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", choices=ALGORITHMS, required=True)
    p.add_argument("--eps", type=float, required=True, help="target excess error")
    p.add_argument("--tau", type=float, required=True, help="promised margin")
    p.add_argument("--rho", type=float, required=True, help="replicability budget")
    p.add_argument("--delta", type=float, required=True, help="failure probability")
    p.add_argument("--dim", type=int, default=30, help="ambient dimension")
    p.add_argument("--law", choices=[LAW_SPHERE, LAW_CLUSTER], default=LAW_SPHERE)
    for flag in ("c1", "c2", "c3", "c4"):
        p.add_argument(f"--{flag}", type=float, default=None,
                       help=f"override calibrated constant {flag}")
    p.add_argument("--cjl", type=float, default=None, help="override JL dimension constant")
    p.add_argument("--ct", type=float, default=None, help="override SGD step-count constant")
    p.add_argument("--cn", type=float, default=None, help="override SGD repetition constant")


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=SharedSeed.parse, default=SharedSeed(0),
                   help="master seed (decimal or 0x hex)")
    p.add_argument("--out", default=None, help="write per-trial records here")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")


def _params_from_args(args) -> LearnParams:
    overrides = {}
    for src, dst in (("c1", "c1"), ("c2", "c2"), ("c3", "c3"), ("c4", "c4"),
                     ("cjl", "c_jl"), ("ct", "c_t"), ("cn", "c_n")):
        v = getattr(args, src)
        if v is not None:
            overrides[dst] = v
    return LearnParams.for_algo(args.algo, eps=args.eps, tau=args.tau,
                                rho=args.rho, delta=args.delta, **overrides)


def _emit_records(summary, args) -> None:
    if not args.out:
        return
    records = [r.to_record() for r in summary.records]
    records.append(summary.to_record())
    if args.format == "csv":
        write_csv(records, args.out)
    else:
        write_jsonl(records, args.out)


def _cmd_gen_data(args) -> int:
    stream = derive_stream(args.seed, ("gen", "wstar"))
    w_star = random_unit_vector(args.dim, stream)
    spec = MarginSpec(dim=args.dim, tau=args.tau, w_star=w_star, law=args.law)
    data = gen_dataset(spec, args.n, derive_stream(args.seed, ("gen", "data")))
    save_dataset(args.out, data)
    print(f"wrote {data.n} samples (dim {data.dim}, tau {data.tau}) to {args.out}")
    return 0


def _cmd_run(args) -> int:
    params = _params_from_args(args)
    if args.data:
        source = FixedSource(load_dataset(args.data))
        dim = source.dim
    else:
        spec = MarginSpec(
            dim=args.dim, tau=args.tau,
            w_star=random_unit_vector(args.dim, derive_stream(args.seed, ("run", "wstar"))),
            law=args.law,
        )
        source = SyntheticSource(spec, derive_stream(args.seed, ("run", "data")))
        dim = args.dim
    sizes = derive_sizes(params, args.algo)
    out = _REGISTRY[args.algo](source, params, args.seed)
    print(f"algorithm   {args.algo}")
    print(f"sizes       {sizes}")
    print(f"token       {out.token}")
    print(f"margin      {out.hypothesis.margin:.6f}")
    if not args.data:
        test = gen_dataset(spec, args.test_size, derive_stream(args.seed, ("run", "test")))
        print(f"test-error  {error_rate(out.hypothesis, test):.6f}")
    if args.out:
        rec = {
            "algorithm": args.algo, "dim": dim, "token": out.token,
            "margin": out.hypothesis.margin, "transcript": list(out.transcript),
        }
        write_jsonl([rec], args.out)
    return 0


def _cmd_replicability(args) -> int:
    params = _params_from_args(args)
    summary = replicability_experiment(
        args.algo, params, args.trials, args.seed,
        dim=args.dim, law=args.law, test_size=args.test_size, workers=args.workers,
    )
    limit = args.rho + args.slack
    ok = summary.wilson_hi <= limit
    print(f"trials          {summary.trials}")
    print(f"failures        {summary.failures}")
    print(f"disagreements   {summary.disagreements}")
    print(f"rate            {summary.rate:.4f}")
    print(f"wilson95        [{summary.wilson_lo:.4f}, {summary.wilson_hi:.4f}]")
    print(f"mean-error      {summary.mean_error:.4f}")
    print(f"check           wilson_hi <= {limit:.4f}: {'pass' if ok else 'FAIL'}")
    _emit_records(summary, args)
    return 0 if ok else 1


def _cmd_accuracy(args) -> int:
    params = _params_from_args(args)
    summary = accuracy_experiment(
        args.algo, params, args.trials, args.seed,
        dim=args.dim, law=args.law, test_size=args.test_size, workers=args.workers,
    )
    need = 1.0 - args.delta - args.slack
    ok = summary.pass_fraction >= need
    print(f"trials          {summary.trials}")
    print(f"failures        {summary.failures}")
    print(f"mean-error      {summary.mean_error:.4f}")
    print(f"max-error       {summary.max_error:.4f}")
    print(f"pass-fraction   {summary.pass_fraction:.4f}")
    print(f"check           pass_fraction >= {need:.4f}: {'pass' if ok else 'FAIL'}")
    _emit_records(summary, args)
    return 0 if ok else 1


def _cmd_lemmas(args) -> int:
    checks = lemma_suite(args.seed, n_mc=args.mc, n_jl=args.jl_trials)
    for c in checks:
        verdict = "pass" if c.passed else "FAIL"
        print(f"{c.name:24s} observed {c.observed:.5f}  bound {c.bound:.5f}  {verdict}")
    ok = lemmas_ok(checks)
    if args.out:
        write_jsonl([c._asdict() for c in checks], args.out)
    print(f"overall         {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def _cmd_calibrate(args) -> int:
    params = _params_from_args(args)
    print(f"calibration sweep for {args.algo} "
          f"(eps={args.eps}, tau={args.tau}, rho={args.rho}, delta={args.delta})")
    base = params.constants_for(args.algo)
    rows = []
    for mult in args.multipliers:
        trial_params = _params_from_args(args)
        if args.knob in ("c1", "c2", "c3", "c4"):
            kw = {args.knob: base[args.knob] * mult}
            trial_params = LearnParams.for_algo(
                args.algo, eps=args.eps, tau=args.tau, rho=args.rho, delta=args.delta, **kw
            )
        rep = replicability_experiment(
            args.algo, trial_params, args.trials, args.seed,
            dim=args.dim, law=args.law, test_size=args.test_size,
        )
        rows.append((mult, rep.rate, rep.mean_error, rep.failures))
        print(f"  {args.knob} x{mult:<5g} disagreement {rep.rate:.3f}  "
              f"mean-error {rep.mean_error:.3f}  failures {rep.failures}")
    if args.out:
        write_jsonl(
            [{"knob": args.knob, "multiplier": m, "disagreement": r,
              "mean_error": e, "failures": f} for m, r, e, f in rows],
            args.out,
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repmargin",
        description="replicable large-margin halfspace learning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic margin dataset")
    p.add_argument("--dim", type=int, default=30)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--law", choices=[LAW_SPHERE, LAW_CLUSTER], default=LAW_SPHERE)
    p.add_argument("--seed", type=SharedSeed.parse, default=SharedSeed(0))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("run", help="single learner execution")
    _add_problem_args(p)
    _add_common_args(p)
    p.add_argument("--data", default=None, help="read samples from this file instead of simulating")
    p.add_argument("--test-size", type=int, default=4000)
    p.set_defaults(fn=_cmd_run)

    for name, fn, check_help in (
        ("replicability", _cmd_replicability, "paired-run token agreement study"),
        ("accuracy", _cmd_accuracy, "single-run error study"),
    ):
        p = sub.add_parser(name, help=check_help)
        _add_problem_args(p)
        _add_common_args(p)
        p.add_argument("--trials", type=int, default=50)
        p.add_argument("--test-size", type=int, default=4000)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--slack", type=float, default=0.0,
                       help="tolerance added to the pass threshold")
        p.set_defaults(fn=fn)

    p = sub.add_parser("lemmas", help="concentration-bound spot checks")
    p.add_argument("--seed", type=SharedSeed.parse, default=SharedSeed(0))
    p.add_argument("--mc", type=int, default=20000)
    p.add_argument("--jl-trials", type=int, default=250)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_lemmas)

    p = sub.add_parser("calibrate", help="sweep one constant and report rates")
    _add_problem_args(p)
    _add_common_args(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--test-size", type=int, default=2000)
    p.add_argument("--knob", choices=["c1", "c2", "c3", "c4"], default="c4")
    p.add_argument("--multipliers", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    p.set_defaults(fn=_cmd_calibrate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InfeasibleMargin, BudgetExceeded, DatasetFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
