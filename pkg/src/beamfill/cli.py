"""Command-line entry points.

Subcommands: ``run`` (execute methods over a task suite),
``sweep-pivots`` (per-pivot accuracy table), ``check-identities``
(randomized verification of the telescoping ratio identity), and
``fit-empirical`` (fit the masked estimator and report its deviation
from the exact conditionals).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from beamfill.backends import ExactMarginalModel, JointTable, fit_empirical
from beamfill.errors import InfillError
from beamfill.harness import (
    BackendSpec,
    ExperimentConfig,
    MethodSpec,
    RunAborted,
    generate_tasks,
    pivot_sweep,
    run_experiment,
    write_rows,
    write_summary_csv,
)
from beamfill.oracle import ci_residual, hcb_identity_check
from beamfill.sampling import SamplerConfig, SamplerKind
from beamfill.scoring import ScoringMode
from beamfill.search import BeamConfig, OrderPolicy
from beamfill.seqcore import Vocab

ENDPOINT_ENV = "MODEL_SERVER_URL"


def _parse_gap(text: str):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (int(lo), int(hi))
    return int(text)


def _parse_pivot(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _backend_spec(args) -> BackendSpec:
    endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV, "")
    return BackendSpec(
        kind=args.backend,
        alphabet=args.alphabet,
        length=args.length,
        joint_seed=args.joint_seed,
        joint_scale=args.joint_scale,
        delta=args.delta,
        fit_samples=args.fit_samples,
        fit_mask_rate=args.mask_rate,
        endpoint=endpoint,
    )


def _load_dataset(path: str, remote_endpoint: str):
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if remote_endpoint:
        from beamfill.remote import remote_tokenize

        return [remote_tokenize(remote_endpoint, ln) for ln in lines]
    return [[int(tok) for tok in ln.split()] for ln in lines]


def _scoring_mode(args) -> ScoringMode:
    if args.mode == "standard":
        return ScoringMode.standard()
    if args.mode == "hcb":
        return ScoringMode.hcb_mask()
    if not args.pivot:
        raise SystemExit("--mode hcb-pivot requires --pivot")
    return ScoringMode.hcb_pivot(_parse_pivot(args.pivot[0]))


def _methods(args) -> tuple[MethodSpec, ...]:
    methods = []
    if args.beam:
        mode = _scoring_mode(args)
        order = OrderPolicy(args.order)
        methods.append(
            MethodSpec(
                name=f"{args.mode}-{args.order}-b{args.beam}",
                beam=BeamConfig(beam_size=args.beam, mode=mode, order=order),
            )
        )
    if args.samples:
        if args.nucleus is not None:
            kind, t, p = SamplerKind.NUCLEUS, 1.0, args.nucleus
            label = f"nucleus{args.nucleus:g}"
        elif args.temperature is not None:
            kind, t, p = SamplerKind.TEMPERATURE, args.temperature, 1.0
            label = f"temp{args.temperature:g}"
        else:
            kind, t, p = SamplerKind.PURE, 1.0, 1.0
            label = "pure"
        methods.append(
            MethodSpec(
                name=f"sample-{label}-b{args.samples}",
                sampler=SamplerConfig(
                    kind=kind,
                    temperature=t,
                    top_p=p,
                    num_candidates=args.samples,
                    seed=args.seed,
                ),
            )
        )
    if not methods:
        methods.append(
            MethodSpec(name="standard-ltr-b5", beam=BeamConfig(beam_size=5))
        )
    return tuple(methods)


def _print_summary(summary: dict) -> None:
    for name, entry in summary.items():
        parts = [name]
        for key, value in entry.items():
            if isinstance(value, float):
                parts.append(f"{key}={value:.4f}")
            else:
                parts.append(f"{key}={value}")
        print("  ".join(parts))


def _cmd_run(args) -> int:
    spec = _backend_spec(args)
    dataset = None
    if args.dataset:
        dataset = _load_dataset(args.dataset, spec.endpoint if spec.kind == "remote" else "")
    cfg = ExperimentConfig(
        backend=spec,
        methods=_methods(args),
        gap=_parse_gap(args.gap),
        num_examples=args.num_examples,
        dataset=dataset,
        ablation=args.ablation,
        seed=args.seed,
        workers=args.workers,
    )
    try:
        result = run_experiment(cfg)
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2
    if args.out:
        write_rows(args.out, result.rows, args.format)
        write_summary_csv(Path(args.out).with_suffix(".summary.csv"), result.summary)
    _print_summary(result.summary)
    return 0


def _cmd_sweep_pivots(args) -> int:
    if not args.pivot:
        raise SystemExit("sweep-pivots requires at least one --pivot")
    cfg = ExperimentConfig(
        backend=_backend_spec(args),
        methods=(MethodSpec(name="probe", beam=BeamConfig(beam_size=args.beam or 5)),),
        gap=_parse_gap(args.gap),
        num_examples=args.num_examples,
        dataset=_load_dataset(args.dataset, "") if args.dataset else None,
        seed=args.seed,
        workers=args.workers,
        pivots=tuple(_parse_pivot(p) for p in args.pivot),
    )
    table = pivot_sweep(cfg, beam_size=args.beam or 5)
    if args.out:
        write_rows(args.out, table, args.format)
    for row in table:
        print(json.dumps(row))
    return 0


def _cmd_check_identities(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        alphabet = int(rng.integers(2, 6))
        length = int(rng.integers(3, 8))
        joint = JointTable.random(alphabet, length, rng, scale=args.joint_scale)
        x = rng.integers(0, alphabet, size=length)
        y = rng.integers(0, alphabet, size=length)
        worst = max(worst, hcb_identity_check(joint, x, y))
    print(f"trials={args.trials} max_residual={worst:.3e} tolerance={args.tol:.1e}")
    return 0 if worst < args.tol else 1


def _cmd_fit_empirical(args) -> int:
    vocab = Vocab.toy(args.alphabet)
    rng = np.random.default_rng(args.joint_seed)
    joint = JointTable.random(args.alphabet, args.length, rng, scale=args.joint_scale)
    exact = ExactMarginalModel(vocab, joint)
    corpus = joint.sample(rng, max(3 * args.fit_samples, 1000))
    estimator = fit_empirical(
        corpus,
        vocab,
        mask_rate=args.mask_rate,
        num_samples=args.fit_samples,
        seed=args.seed,
    )
    tasks = [t for t, _ in generate_tasks(corpus[:5000], vocab, 1, args.num_examples, args.seed)]
    mean, worst = ci_residual(estimator, exact, tasks)
    print(
        f"samples={args.fit_samples} mask_rate={args.mask_rate} "
        f"ci_mean={mean:.4f} ci_max={worst:.4f} (nats, {args.num_examples} tasks)"
    )
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=["exact", "empirical", "perturbed", "remote"], default="exact")
    p.add_argument("--dataset", help="path: token-id lines, or raw text for remote")
    p.add_argument("--gap", default="2", help="gap length, or LO:HI for a mixed range")
    p.add_argument("--beam", type=int, default=0, help="beam size (adds a beam method)")
    p.add_argument("--mode", choices=["standard", "hcb", "hcb-pivot"], default="standard")
    p.add_argument("--order", choices=["ltr", "b2w"], default="ltr")
    p.add_argument("--pivot", action="append", default=[], help="comma-separated token ids")
    p.add_argument("--ablation", choices=["none", "context", "token"], default="none")
    p.add_argument("--samples", type=int, default=0, help="sampler candidates (adds a sampler method)")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--nucleus", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="row output path")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--num-examples", type=int, default=100)
    p.add_argument("--alphabet", type=int, default=3)
    p.add_argument("--length", type=int, default=5)
    p.add_argument("--joint-seed", type=int, default=0)
    p.add_argument("--joint-scale", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--fit-samples", type=int, default=10**4)
    p.add_argument("--mask-rate", type=float, default=0.15)
    p.add_argument("--endpoint", default="", help=f"model server URL (or ${ENDPOINT_ENV})")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="beamfill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute methods over a task suite")
    _add_common(run_p)
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep-pivots", help="per-pivot accuracy table")
    _add_common(sweep_p)
    sweep_p.set_defaults(func=_cmd_sweep_pivots)

    check_p = sub.add_parser("check-identities", help="randomized ratio-identity check")
    check_p.add_argument("--trials", type=int, default=1000)
    check_p.add_argument("--seed", type=int, default=0)
    check_p.add_argument("--joint-scale", type=float, default=1.0)
    check_p.add_argument("--tol", type=float, default=1e-9)
    check_p.set_defaults(func=_cmd_check_identities)

    fit_p = sub.add_parser("fit-empirical", help="fit the masked estimator, report deviation")
    fit_p.add_argument("--alphabet", type=int, default=3)
    fit_p.add_argument("--length", type=int, default=5)
    fit_p.add_argument("--joint-seed", type=int, default=0)
    fit_p.add_argument("--joint-scale", type=float, default=1.0)
    fit_p.add_argument("--mask-rate", type=float, default=0.15)
    fit_p.add_argument("--fit-samples", type=int, default=10**4)
    fit_p.add_argument("--num-examples", type=int, default=100)
    fit_p.add_argument("--seed", type=int, default=0)
    fit_p.set_defaults(func=_cmd_fit_empirical)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
