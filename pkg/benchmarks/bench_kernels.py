"""Time the compiled kernels against the NumPy reference.

Runs both implementations on identical inputs, checks they agree, and
prints best-of-N wall times per call with the speedup.  Workloads mirror
the hot path: conditional queries against dense log-joints at the table
sizes the exact backends actually use.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--calls N]
"""

import argparse
import time

import numpy as np

from beamfill.kernels import _ref

try:
    from beamfill.kernels import _core
except ImportError:
    _core = None


def random_case(rng, alphabet, length, observed):
    """One table plus an observation pattern with `observed` fixed slots."""
    logits = rng.normal(size=alphabet**length)
    table = logits - _ref.logsumexp(logits)
    obs = np.full(length, -1, dtype=np.int64)
    fixed = rng.choice(length, size=observed, replace=False)
    obs[fixed] = rng.integers(0, alphabet, size=observed)
    query = int(rng.integers(0, length))
    return table, obs, query


def best_of(fn, repeats, calls):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(calls):
            fn()
        best = min(best, (time.perf_counter() - start) / calls)
    return best


def bench_marginal(rng, repeats, calls):
    rows = []
    for alphabet, length, observed in [(3, 5, 2), (3, 5, 4), (4, 6, 3), (2, 10, 5), (5, 7, 4)]:
        table, obs, query = random_case(rng, alphabet, length, observed)
        got = _core.marginal_logcond(table, obs, query, alphabet)
        want = _ref.marginal_logcond(table, obs, query, alphabet)
        assert np.abs(got - want).max() < 1e-12, "implementations disagree"
        t_core = best_of(lambda: _core.marginal_logcond(table, obs, query, alphabet), repeats, calls)
        t_ref = best_of(lambda: _ref.marginal_logcond(table, obs, query, alphabet), repeats, calls)
        rows.append((f"marginal_logcond A={alphabet} n={length} obs={observed}", t_core, t_ref))
    return rows


def bench_logsumexp(rng, repeats, calls):
    rows = []
    for size in (8, 64, 4096):
        values = rng.normal(size=size)
        assert abs(_core.logsumexp(values) - _ref.logsumexp(values)) < 1e-12
        t_core = best_of(lambda: _core.logsumexp(values), repeats, calls)
        t_ref = best_of(lambda: _ref.logsumexp(values), repeats, calls)
        rows.append((f"logsumexp size={size}", t_core, t_ref))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repetitions, best kept")
    parser.add_argument("--calls", type=int, default=200, help="calls per repetition")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _core is None:
        raise SystemExit("compiled extension not importable; build it first (pip install -e .)")

    rng = np.random.default_rng(args.seed)
    rows = bench_marginal(rng, args.repeats, args.calls)
    rows += bench_logsumexp(rng, args.repeats, args.calls)

    width = max(len(name) for name, _, _ in rows)
    print(f"{'workload':<{width}}  {'compiled':>10}  {'reference':>10}  {'speedup':>8}")
    for name, t_core, t_ref in rows:
        print(f"{name:<{width}}  {t_core * 1e6:>8.1f}us  {t_ref * 1e6:>8.1f}us  {t_ref / t_core:>7.1f}x")


if __name__ == "__main__":
    main()
