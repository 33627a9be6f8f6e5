"""Beam search is checked against blunt re-implementations: iterated
argmax for the greedy case and full stepwise enumeration for the
exhaustive one."""

from itertools import product

import numpy as np
import pytest

from beamfill.backends import CallCountingBackend, ExactMarginalModel, JointTable
from beamfill.errors import ConfigError
from beamfill.oracle import enumerate_gap
from beamfill.scoring import ScoringMode, step_scores
from beamfill.search import (
    BeamConfig,
    OrderPolicy,
    SearchStats,
    autoregressive_beam_search,
    infill_beam_search,
    select_next_position,
)
from beamfill.seqcore import GapTask, Hypothesis, Vocab


def make_case(seed=0, alphabet=3, length=5, start=1, stop=4, scale=1.0):
    vocab = Vocab.toy(alphabet)
    joint = JointTable.random(alphabet, length, np.random.default_rng(seed), scale=scale)
    model = ExactMarginalModel(vocab, joint)
    tokens = [(i * 2 + 1) % alphabet for i in range(length)]
    full = list(tokens)
    for p in range(start, stop):
        full[p] = vocab.mask_id
    task = GapTask(tokens=tuple(full), start=start, stop=stop)
    return vocab, joint, model, task


def stepwise_enumeration(model, task, mode):
    """Score every span by left-to-right accumulation, sorted like the
    beam: score descending, span ascending."""
    alphabet = len(model.vocab.content_ids)
    out = []
    for span in product(range(alphabet), repeat=task.gap_length):
        hyp = Hypothesis.empty()
        for i, pos in enumerate(task.gap_positions):
            scores = step_scores(model, task, hyp, pos, mode)
            hyp = hyp.extend(pos, span[i], float(scores[span[i]]))
        out.append((span, hyp.score))
    out.sort(key=lambda it: (-it[1], it[0]))
    return out


def expected_score_calls(beam, alphabet, gap):
    return sum(min(beam, alphabet**t) for t in range(gap))


def expected_probe_calls(beam, alphabet, gap):
    # one probe per unfilled position per live hypothesis, skipped when
    # only one position remains
    total = 0
    for t in range(gap):
        remaining = gap - t
        if remaining > 1:
            total += min(beam, alphabet**t) * remaining
    return total


def spans_of(results, task):
    return [tuple(seq[p] for p in task.gap_positions) for seq, _ in results]


class TestGreedy:
    def test_beam_one_is_iterated_argmax(self):
        vocab, joint, model, task = make_case(seed=1)
        out = infill_beam_search(model, task, BeamConfig(beam_size=1))
        assert len(out) == 1

        hyp = Hypothesis.empty()
        content = np.array(vocab.content_ids)
        for pos in task.gap_positions:
            scores = step_scores(model, task, hyp, pos, ScoringMode.standard())
            tok = int(content[np.argmax(scores[content])])
            hyp = hyp.extend(pos, tok, float(scores[tok]))
        assert spans_of(out, task)[0] == tuple(
            hyp.filled[p] for p in task.gap_positions
        )
        assert out[0][1] == pytest.approx(hyp.score, abs=1e-12)


class TestExhaustive:
    @pytest.mark.parametrize(
        "mode",
        [ScoringMode.standard(), ScoringMode.hcb_mask(), ScoringMode.hcb_pivot((0, 2, 1))],
        ids=["standard", "hcb", "pivot"],
    )
    def test_full_beam_equals_stepwise_enumeration(self, mode):
        vocab, joint, model, task = make_case(seed=2)
        full = 3**task.gap_length
        out = infill_beam_search(model, task, BeamConfig(beam_size=full, mode=mode))
        want = stepwise_enumeration(model, task, mode)
        assert spans_of(out, task) == [s for s, _ in want]
        np.testing.assert_allclose(
            [sc for _, sc in out], [sc for _, sc in want], atol=1e-12
        )

    def test_standard_full_beam_recovers_exact_posterior_ranking(self):
        vocab, joint, model, task = make_case(seed=3)
        full = 3**task.gap_length
        out = infill_beam_search(model, task, BeamConfig(beam_size=full))
        ranked = enumerate_gap(joint, task)
        assert spans_of(out, task) == [s for s, _ in ranked]
        # cumulative scores differ from the posterior only by the chain
        # rule normalizer and the per-step content mass factor
        offset = out[0][1] - ranked[0][1]
        for (got, (_, want)) in zip(out, ranked):
            assert got[1] - want == pytest.approx(offset, abs=1e-9)

    def test_gap_one_beam_is_argsort(self):
        vocab, joint, model, task = make_case(seed=4, start=2, stop=3)
        out = infill_beam_search(model, task, BeamConfig(beam_size=3))
        scores = step_scores(
            model, task, Hypothesis.empty(), 2, ScoringMode.standard()
        )
        content = np.array(vocab.content_ids)
        want = [int(content[i]) for i in np.argsort(-scores[content], kind="stable")]
        assert [s[0] for s in spans_of(out, task)] == want


class TestDeterminismAndTies:
    def test_repeat_runs_identical(self):
        vocab, joint, model, task = make_case(seed=5)
        cfg = BeamConfig(beam_size=4, order=OrderPolicy.BEST_TO_WORST)
        assert infill_beam_search(model, task, cfg) == infill_beam_search(
            model, task, cfg
        )

    def test_uniform_joint_breaks_ties_lexicographically(self):
        vocab = Vocab.toy(3)
        joint = JointTable.uniform(3, 4)
        model = ExactMarginalModel(vocab, joint)
        task = GapTask(tokens=(0, 3, 3, 1), start=1, stop=3)
        out = infill_beam_search(model, task, BeamConfig(beam_size=5))
        got = spans_of(out, task)
        assert got == sorted(got)
        assert got == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1)]

    def test_outputs_contain_no_masks(self):
        vocab, joint, model, task = make_case(seed=6)
        for seq, _ in infill_beam_search(model, task, BeamConfig(beam_size=9)):
            assert vocab.mask_id not in seq
            assert len(seq) == task.n

    def test_scores_descend(self):
        vocab, joint, model, task = make_case(seed=7)
        out = infill_beam_search(model, task, BeamConfig(beam_size=9))
        scores = [sc for _, sc in out]
        assert scores == sorted(scores, reverse=True)


class TestOrderPolicies:
    def test_gap_one_orders_agree(self):
        vocab, joint, model, task = make_case(seed=8, start=2, stop=3)
        ltr = infill_beam_search(model, task, BeamConfig(beam_size=3))
        b2w = infill_beam_search(
            model, task, BeamConfig(beam_size=3, order=OrderPolicy.BEST_TO_WORST)
        )
        assert ltr == b2w

    def test_single_unfilled_position_skips_probing(self):
        vocab, joint, model, task = make_case(seed=9, start=1, stop=2)
        stats = SearchStats()
        pos = select_next_position(
            model, task, Hypothesis.empty(), OrderPolicy.BEST_TO_WORST, stats=stats
        )
        assert pos == 1
        assert stats.probe_calls == 0

    def test_probe_picks_most_confident_position(self):
        # independent recomputation of the probe rule
        vocab, joint, model, task = make_case(seed=10)
        hyp = Hypothesis.empty()
        content = np.array(vocab.content_ids)
        confidences = {}
        for pos in hyp.unfilled(task):
            dist = model.conditionals(task.tokens, pos)
            confidences[pos] = float(np.max(dist.logp[content]))
        best = max(sorted(confidences), key=lambda p: confidences[p])
        got = select_next_position(
            model, task, hyp, OrderPolicy.BEST_TO_WORST
        )
        assert got == best

    def test_shared_order_matches_per_hypothesis_at_beam_one(self):
        vocab, joint, model, task = make_case(seed=11)
        per_hyp = infill_beam_search(
            model, task, BeamConfig(beam_size=1, order=OrderPolicy.BEST_TO_WORST)
        )
        shared = infill_beam_search(
            model,
            task,
            BeamConfig(
                beam_size=1, order=OrderPolicy.BEST_TO_WORST, shared_order=True
            ),
        )
        assert per_hyp == shared


class TestBudgets:
    @pytest.mark.parametrize("beam", [1, 2, 4, 9, 27])
    def test_score_call_budget_exact(self, beam):
        vocab, joint, model, task = make_case(seed=12)
        counted = CallCountingBackend(model)
        stats = SearchStats()
        infill_beam_search(counted, task, BeamConfig(beam_size=beam), stats=stats)
        want = expected_score_calls(beam, 3, task.gap_length)
        assert stats.score_calls == want
        assert counted.calls == want  # ltr probes nothing

    @pytest.mark.parametrize("beam", [1, 3, 9])
    def test_probe_call_budget_exact(self, beam):
        vocab, joint, model, task = make_case(seed=13)
        stats = SearchStats()
        infill_beam_search(
            model,
            task,
            BeamConfig(beam_size=beam, order=OrderPolicy.BEST_TO_WORST),
            stats=stats,
        )
        assert stats.probe_calls == expected_probe_calls(beam, 3, task.gap_length)
        assert stats.score_calls == expected_score_calls(beam, 3, task.gap_length)

    def test_live_width_saturates(self):
        vocab, joint, model, task = make_case(seed=14)
        stats = SearchStats()
        infill_beam_search(model, task, BeamConfig(beam_size=5), stats=stats)
        assert stats.live_per_step == [3, 5, 5]


class TestAutoregressive:
    def test_equals_all_gap_infill(self):
        vocab = Vocab.toy(2)
        joint = JointTable.random(2, 4, np.random.default_rng(15))
        model = ExactMarginalModel(vocab, joint)
        auto = autoregressive_beam_search(model, length=4, beam_size=3)
        task = GapTask(tokens=(vocab.mask_id,) * 4, start=0, stop=4)
        infill = infill_beam_search(model, task, BeamConfig(beam_size=3))
        assert auto == infill


def test_beam_size_validated():
    with pytest.raises(ConfigError):
        BeamConfig(beam_size=0)
