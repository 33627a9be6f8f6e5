"""Experiment orchestration: task generation, method execution, ablation
wrappers, and result emission.

A run takes one backend, one task suite, and a list of methods (beam
configurations and sampler configurations), executes every method on
every task, and emits per-row records plus an aggregate summary that is
exactly recomputable from the rows.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from beamfill.backends import (
    CallCountingBackend,
    ConditionalBackend,
    ExactMarginalModel,
    JointTable,
    PerturbedModel,
    fit_empirical,
)
from beamfill.errors import ConfigError, InfillError, InvalidInput
from beamfill.metrics import EvalRecord
from beamfill.sampling import SamplerConfig, sample_infill
from beamfill.scoring import ScoringKind, ScoringMode
from beamfill.search import BeamConfig, SearchStats, infill_beam_search
from beamfill.seqcore import CondDistribution, GapTask, Vocab, mask_out

log = logging.getLogger(__name__)

BUFFER_CAPACITY = 1000


class MaskProbBuffer:
    """Ring buffer of the most recent mask log-probability reads."""

    def __init__(self, capacity: int = BUFFER_CAPACITY) -> None:
        if capacity < 1:
            raise ConfigError("buffer capacity must be positive")
        self.capacity = capacity
        self._buf: deque[float] = deque(maxlen=capacity)

    def push(self, value: float) -> None:
        self._buf.append(float(value))

    def draw(self, rng: np.random.Generator) -> float:
        if not self._buf:
            raise InvalidInput("cannot draw from an empty buffer")
        return self._buf[int(rng.integers(0, len(self._buf)))]

    def __len__(self) -> int:
        return len(self._buf)


class Ablation1Backend(ConditionalBackend):
    """Context scramble: mask-probability reads are answered with a random
    recent read instead of the current one.

    Each read pushes the true value first, so the first call returns the
    true value and the buffer always reflects the actual call history.
    Only the correction read is touched; conditionals pass through, so
    scoring that never reads the correction is bit-identical.
    """

    def __init__(self, inner: ConditionalBackend, seed: int = 0) -> None:
        self.inner = inner
        self.vocab = inner.vocab
        self.name = f"ablation1({inner.name})"
        self.buffer = MaskProbBuffer()
        self._rng = np.random.default_rng(seed)

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        return self.inner.conditionals(context, position)

    def correction_logp(self, context: Sequence[int], dist: CondDistribution) -> float:
        true_value = self.inner.correction_logp(context, dist)
        self.buffer.push(true_value)
        return self.buffer.draw(self._rng)


class Ablation2Backend(ConditionalBackend):
    """Token swap: the correction reads the log-probability of a random
    content token instead of the mask token.

    The realization still uses masks as filler; only the subtracted
    scalar changes.
    """

    def __init__(self, inner: ConditionalBackend, seed: int = 0) -> None:
        self.inner = inner
        self.vocab = inner.vocab
        self.name = f"ablation2({inner.name})"
        self._rng = np.random.default_rng(seed)
        self._content = inner.vocab.content_ids

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        return self.inner.conditionals(context, position)

    def correction_logp(self, context: Sequence[int], dist: CondDistribution) -> float:
        swap = self._content[int(self._rng.integers(0, len(self._content)))]
        return float(dist.logp[swap])


def ablation1_wrap(backend: ConditionalBackend, seed: int = 0) -> Ablation1Backend:
    return Ablation1Backend(backend, seed)


def ablation2_wrap(backend: ConditionalBackend, seed: int = 0) -> Ablation2Backend:
    return Ablation2Backend(backend, seed)


class MaskProbRecorder(ConditionalBackend):
    """Transparent wrapper accumulating the mask log-probability of every
    distribution that passes through, for the run-level diagnostic."""

    def __init__(self, inner: ConditionalBackend) -> None:
        self.inner = inner
        self.vocab = inner.vocab
        self.name = inner.name
        self.count = 0
        self.total = 0.0
        self.total_sq = 0.0

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        dist = self.inner.conditionals(context, position)
        value = float(dist.logp[self.vocab.mask_id])
        self.count += 1
        self.total += value
        self.total_sq += value * value
        return dist

    def correction_logp(self, context: Sequence[int], dist: CondDistribution) -> float:
        return self.inner.correction_logp(context, dist)


def generate_tasks(
    dataset: Sequence[Sequence[int]],
    vocab: Vocab,
    k: int,
    num_examples: int,
    seed: int,
) -> list[tuple[GapTask, tuple[int, ...]]]:
    """Mask a uniform random length-k contiguous span of randomly chosen
    examples.  Examples shorter than k+1 are skipped (counted in a log
    message); at least one example must remain."""
    if k < 1 or num_examples < 1:
        raise InvalidInput("k and num_examples must be positive")
    eligible = [tuple(int(t) for t in row) for row in dataset if len(row) >= k + 1]
    skipped = len(dataset) - len(eligible)
    if skipped:
        log.warning("skipped %d examples shorter than %d tokens", skipped, k + 1)
    if not eligible:
        raise InvalidInput(f"no examples of length >= {k + 1}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_examples):
        row = eligible[int(rng.integers(0, len(eligible)))]
        start = int(rng.integers(0, len(row) - k + 1))
        out.append(mask_out(row, start, start + k, vocab))
    return out


@dataclass(frozen=True)
class BackendSpec:
    """Recipe for constructing the run's backend."""

    kind: str = "exact"  # exact | empirical | perturbed | remote
    alphabet: int = 3
    length: int = 5
    joint_seed: int = 0
    joint_scale: float = 1.0
    mask_mass: float = 1e-4
    delta: float = 1.0
    perturb_seed: int = 0
    fit_samples: int = 10**4
    fit_mask_rate: float = 0.15
    fit_seed: int = 0
    endpoint: str = ""


def build_backend(spec: BackendSpec) -> ConditionalBackend:
    if spec.kind == "remote":
        from beamfill.remote import RemoteBackend

        if not spec.endpoint:
            raise ConfigError("remote backend needs an endpoint URL")
        return RemoteBackend(spec.endpoint)

    vocab = Vocab.toy(spec.alphabet)
    rng = np.random.default_rng(spec.joint_seed)
    joint = JointTable.random(spec.alphabet, spec.length, rng, scale=spec.joint_scale)
    exact = ExactMarginalModel(vocab, joint, mask_mass=spec.mask_mass)
    if spec.kind == "exact":
        return exact
    if spec.kind == "perturbed":
        return PerturbedModel(exact, strength=spec.delta, seed=spec.perturb_seed)
    if spec.kind == "empirical":
        corpus = joint.sample(rng, max(spec.fit_samples * 3, 1000))
        return fit_empirical(
            corpus,
            vocab,
            mask_rate=spec.fit_mask_rate,
            num_samples=spec.fit_samples,
            seed=spec.fit_seed,
            mask_mass=spec.mask_mass,
        )
    raise ConfigError(f"unknown backend kind: {spec.kind!r}")


@dataclass(frozen=True)
class MethodSpec:
    """Exactly one of ``beam`` or ``sampler`` must be set."""

    name: str
    beam: Optional[BeamConfig] = None
    sampler: Optional[SamplerConfig] = None

    def __post_init__(self) -> None:
        if (self.beam is None) == (self.sampler is None):
            raise ConfigError("method needs exactly one of beam or sampler")


@dataclass(frozen=True)
class ExperimentConfig:
    backend: BackendSpec
    methods: tuple[MethodSpec, ...]
    gap: Union[int, tuple[int, int]] = 2
    num_examples: int = 100
    dataset: Optional[Sequence[Sequence[int]]] = None
    ablation: str = "none"  # none | context | token
    seed: int = 0
    eval_topk: tuple[int, ...] = (1, 5)
    workers: int = 1
    pivots: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.num_examples < 1:
            raise ConfigError("num_examples must be positive")
        if not self.methods:
            raise ConfigError("need at least one method")
        if self.ablation not in ("none", "context", "token"):
            raise ConfigError(f"unknown ablation: {self.ablation!r}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")


class RunAborted(InfillError):
    """Raised when the per-task failure rate exceeds the abort threshold."""


def _synthesize_dataset(
    backend: ConditionalBackend, spec: BackendSpec, num_rows: int, seed: int
) -> list[tuple[int, ...]]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))
    joint = getattr(backend, "joint", None)
    if joint is None:
        base = getattr(backend, "base", None)
        joint = getattr(base, "joint", None)
    if joint is None:
        # estimator or remote: rebuild the generating joint from the spec
        jrng = np.random.default_rng(spec.joint_seed)
        joint = JointTable.random(spec.alphabet, spec.length, jrng, scale=spec.joint_scale)
    return [tuple(row) for row in joint.sample(rng, num_rows)]


def _task_seed(run_seed: int, task_index: int) -> int:
    return int(np.random.SeedSequence([run_seed, task_index]).generate_state(1)[0])


def _gap_lengths(cfg: ExperimentConfig) -> list[int]:
    if isinstance(cfg.gap, int):
        return [cfg.gap] * cfg.num_examples
    lo, hi = cfg.gap
    if not 1 <= lo <= hi:
        raise ConfigError(f"invalid gap range {cfg.gap}")
    ks = []
    for i in range(cfg.num_examples):
        ks.append(lo + i % (hi - lo + 1))
    return ks


def _dedup(spans: Sequence[tuple[int, ...]]) -> list[tuple[int, ...]]:
    seen = set()
    out = []
    for s in spans:
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def _run_one(
    backend: ConditionalBackend,
    method: MethodSpec,
    task: GapTask,
    truth: tuple[int, ...],
    task_index: int,
    run_seed: int,
) -> dict:
    counted = CallCountingBackend(backend)
    recorder = MaskProbRecorder(counted)
    stats = SearchStats()
    started = time.perf_counter()
    if method.beam is not None:
        ranked = infill_beam_search(recorder, task, method.beam, stats=stats)
    else:
        cfg = method.sampler
        assert cfg is not None
        # per-task derived seed: results independent of scheduling order
        derived = SamplerConfig(
            kind=cfg.kind,
            temperature=cfg.temperature,
            top_p=cfg.top_p,
            num_candidates=cfg.num_candidates,
            seed=int(
                np.random.SeedSequence(
                    [cfg.seed & 0xFFFFFFFFFFFFFFFF, run_seed & 0xFFFFFFFFFFFFFFFF, task_index]
                ).generate_state(1)[0]
            ),
        )
        ranked = sample_infill(recorder, task, derived)
        stats.score_calls = counted.calls
    elapsed = time.perf_counter() - started

    spans = _dedup(
        tuple(seq[p] for p in task.gap_positions) for seq, _ in ranked
    )
    record = EvalRecord.build(str(task_index), method.name, truth, spans)
    return {
        "task": task_index,
        "method": method.name,
        "gap": task.gap_length,
        "truth": list(truth),
        "predictions": [list(s) for s in record.predictions],
        "hit_rank": record.hit_rank,
        "bleu": record.bleu,
        "seconds": elapsed,
        "calls": counted.calls,
        "score_calls": stats.score_calls,
        "probe_calls": stats.probe_calls,
        "mask_logp_count": recorder.count,
        "mask_logp_sum": recorder.total,
        "mask_logp_sumsq": recorder.total_sq,
    }


def summarize(rows: Sequence[dict], topk: Sequence[int]) -> dict:
    """Aggregate per-method numbers; every value derives from the rows."""
    methods: dict[str, list[dict]] = {}
    for row in rows:
        if "error" in row:
            continue
        methods.setdefault(row["method"], []).append(row)
    out = {}
    for name, rws in sorted(methods.items()):
        n = len(rws)
        entry = {"tasks": n}
        for k in topk:
            hits = sum(1 for r in rws if r["hit_rank"] is not None and r["hit_rank"] <= k)
            entry[f"top{k}"] = hits / n
        entry["bleu"] = sum(r["bleu"] for r in rws) / n
        entry["calls"] = sum(r["calls"] for r in rws)
        entry["probe_calls"] = sum(r["probe_calls"] for r in rws)
        entry["seconds"] = sum(r["seconds"] for r in rws)
        count = sum(r["mask_logp_count"] for r in rws)
        total = sum(r["mask_logp_sum"] for r in rws)
        total_sq = sum(r["mask_logp_sumsq"] for r in rws)
        if count:
            mean = total / count
            entry["mask_logp_mean"] = mean
            entry["mask_logp_var"] = max(0.0, total_sq / count - mean * mean)
        out[name] = entry
    return out


@dataclass
class ExperimentResult:
    rows: list[dict]
    summary: dict
    tasks: list[tuple[GapTask, tuple[int, ...]]] = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute every configured method on every generated task.

    Per-task failures become error rows; more than 10% of them abort the
    run.  With an ablation active, tasks run sequentially so the context
    scramble buffer sees a deterministic call order.
    """
    base = build_backend(cfg.backend)
    if cfg.dataset is not None:
        dataset = [tuple(int(t) for t in row) for row in cfg.dataset]
    else:
        dataset = _synthesize_dataset(
            base, cfg.backend, max(cfg.num_examples, 200), cfg.seed
        )

    tasks: list[tuple[GapTask, tuple[int, ...]]] = []
    for i, k in enumerate(_gap_lengths(cfg)):
        tasks.extend(generate_tasks(dataset, base.vocab, k, 1, _task_seed(cfg.seed, i)))

    rows: list[dict] = []
    failures = 0
    total_jobs = len(tasks) * len(cfg.methods)

    for method in cfg.methods:
        if cfg.ablation == "context":
            backend: ConditionalBackend = ablation1_wrap(base, seed=cfg.seed)
        elif cfg.ablation == "token":
            backend = ablation2_wrap(base, seed=cfg.seed)
        else:
            backend = base
        workers = 1 if cfg.ablation != "none" else cfg.workers

        def job(item):
            index, (task, truth) = item
            return _run_one(backend, method, task, truth, index, cfg.seed)

        method_rows: list[dict] = []
        if workers == 1:
            for item in enumerate(tasks):
                method_rows.append(_guarded(job, item, method.name))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                method_rows = list(
                    pool.map(lambda it: _guarded(job, it, method.name), enumerate(tasks))
                )
        failures += sum(1 for r in method_rows if "error" in r)
        rows.extend(method_rows)

    if failures > 0.1 * total_jobs:
        raise RunAborted(f"{failures}/{total_jobs} task executions failed")
    return ExperimentResult(rows=rows, summary=summarize(rows, cfg.eval_topk), tasks=tasks)


def _guarded(job, item, method_name: str) -> dict:
    index = item[0]
    try:
        return job(item)
    except InfillError as exc:
        log.error("task %d method %s failed: %s", index, method_name, exc)
        return {"task": index, "method": method_name, "error": str(exc)}


def pivot_sweep(cfg: ExperimentConfig, beam_size: int = 5) -> list[dict]:
    """Run the pivot-corrected beam once per configured pivot over a
    shared task suite; returns per-pivot accuracy rows, best first."""
    if not cfg.pivots:
        raise ConfigError("pivot sweep needs at least one pivot")
    out = []
    for pivot in cfg.pivots:
        mode = ScoringMode.hcb_pivot(pivot)
        method = MethodSpec(
            name=f"pivot-{'-'.join(str(t) for t in pivot)}",
            beam=BeamConfig(beam_size=beam_size, mode=mode),
        )
        result = run_experiment(
            ExperimentConfig(
                backend=cfg.backend,
                methods=(method,),
                gap=cfg.gap,
                num_examples=cfg.num_examples,
                dataset=cfg.dataset,
                ablation=cfg.ablation,
                seed=cfg.seed,
                eval_topk=cfg.eval_topk,
                workers=cfg.workers,
            )
        )
        summary = result.summary[method.name]
        row = {"pivot": list(pivot)}
        row.update(summary)
        out.append(row)
    first_k = cfg.eval_topk[0]
    out.sort(key=lambda r: (-r[f"top{first_k}"], r["pivot"]))
    return out


def write_rows(path: Union[str, Path], rows: Sequence[dict], fmt: str) -> None:
    path = Path(path)
    if fmt == "jsonl":
        with path.open("w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    elif fmt == "csv":
        import csv

        fieldnames: list[str] = []
        for row in rows:
            for key in row:
                if key not in fieldnames:
                    fieldnames.append(key)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                flat = {
                    k: json.dumps(v) if isinstance(v, (list, dict)) else v
                    for k, v in row.items()
                }
                writer.writerow(flat)
    else:
        raise ConfigError(f"unknown output format: {fmt!r}")


def write_summary_csv(path: Union[str, Path], summary: dict) -> None:
    import csv

    fieldnames = ["method"]
    for entry in summary.values():
        for key in entry:
            if key not in fieldnames:
                fieldnames.append(key)
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for name, entry in summary.items():
            writer.writerow({"method": name, **entry})
