import numpy as np
import pytest

from beamfill.backends import (
    CallCountingBackend,
    ExactMarginalModel,
    JointTable,
    PerturbedModel,
)
from beamfill.errors import ConfigError, InvalidQuery
from beamfill.oracle import enumerate_gap
from beamfill.scoring import ScoringKind, ScoringMode, step_scores
from beamfill.seqcore import GapTask, Hypothesis, Vocab, realize


def setup_case(seed=0, length=5, start=1, stop=4):
    vocab = Vocab.toy(3)
    joint = JointTable.random(3, length, np.random.default_rng(seed))
    model = ExactMarginalModel(vocab, joint)
    tokens = [0, 1, 2, 0, 1][:length]
    full = list(tokens)
    for p in range(start, stop):
        full[p] = vocab.mask_id
    task = GapTask(tokens=tuple(full), start=start, stop=stop)
    return vocab, joint, model, task


class TestScoringMode:
    def test_constructors(self):
        assert ScoringMode.standard().kind is ScoringKind.STANDARD
        assert ScoringMode.hcb_mask().kind is ScoringKind.HCB_MASK
        mode = ScoringMode.hcb_pivot((0, 1), query_holds_mask=True)
        assert mode.pivot == (0, 1)
        assert mode.query_holds_mask

    def test_pivot_required_for_pivot_mode(self):
        with pytest.raises(ConfigError):
            ScoringMode(ScoringKind.HCB_PIVOT)

    def test_pivot_rejected_elsewhere(self):
        with pytest.raises(ConfigError):
            ScoringMode(ScoringKind.STANDARD, pivot=(0, 1))


class TestStepScores:
    def test_standard_is_the_masked_conditional(self):
        vocab, joint, model, task = setup_case()
        hyp = Hypothesis.empty().extend(1, 2, -0.3)
        scores = step_scores(model, task, hyp, 2, ScoringMode.standard())
        seq = realize(task, hyp, vocab.mask_id)
        np.testing.assert_array_equal(scores, model.conditionals(seq, 2).logp)

    def test_every_mode_costs_one_backend_call(self):
        vocab, joint, model, task = setup_case()
        counted = CallCountingBackend(model)
        hyp = Hypothesis.empty()
        for mode in (
            ScoringMode.standard(),
            ScoringMode.hcb_mask(),
            ScoringMode.hcb_pivot((0, 0, 0)),
            ScoringMode.hcb_pivot((1, 2, 0), query_holds_mask=True),
        ):
            counted.reset()
            step_scores(counted, task, hyp, task.start, mode)
            assert counted.calls == 1

    def test_mask_correction_is_a_constant_shift(self):
        # constant mask mass means ranking-identical scores
        vocab, joint, model, task = setup_case()
        hyp = Hypothesis.empty()
        std = step_scores(model, task, hyp, 1, ScoringMode.standard())
        hcb = step_scores(model, task, hyp, 1, ScoringMode.hcb_mask())
        shift = hcb - std
        np.testing.assert_allclose(shift, shift[0], atol=1e-12)
        assert shift[0] == pytest.approx(-np.log(model.mask_mass), abs=1e-9)
        content = list(vocab.content_ids)
        assert list(np.argsort(-std[content])) == list(np.argsort(-hcb[content]))

    def test_pivot_token_scores_zero(self):
        vocab, joint, model, task = setup_case()
        pivot = (2, 0, 1)
        mode = ScoringMode.hcb_pivot(pivot)
        for i, pos in enumerate(task.gap_positions):
            hyp = Hypothesis.empty()
            scores = step_scores(model, task, hyp, pos, mode)
            assert scores[pivot[i]] == pytest.approx(0.0, abs=1e-12)

    def test_pivot_chain_telescopes_to_exact_log_ratio(self):
        # left-to-right accumulation of pivot-relative step scores must
        # reproduce log p(completion)/p(pivot) from full enumeration
        vocab, joint, model, task = setup_case(seed=3)
        pivot = (1, 1, 0)
        mode = ScoringMode.hcb_pivot(pivot)
        posterior = dict(enumerate_gap(joint, task))
        for completion in ((0, 0, 0), (2, 1, 0), (1, 2, 2)):
            hyp = Hypothesis.empty()
            total = 0.0
            for i, pos in enumerate(task.gap_positions):
                scores = step_scores(model, task, hyp, pos, mode)
                total += float(scores[completion[i]])
                hyp = hyp.extend(pos, completion[i], float(scores[completion[i]]))
            want = posterior[completion] - posterior[pivot]
            assert total == pytest.approx(want, abs=1e-9)

    def test_query_holds_mask_changes_the_realization(self):
        # exact backends ignore the query slot, a context-hashing
        # backend does not
        vocab, joint, model, task = setup_case(seed=4)
        pert = PerturbedModel(model, strength=1.0, seed=0)
        plain = ScoringMode.hcb_pivot((0, 1, 2))
        masked = ScoringMode.hcb_pivot((0, 1, 2), query_holds_mask=True)
        hyp = Hypothesis.empty()
        same_a = step_scores(model, task, hyp, 1, plain)
        same_b = step_scores(model, task, hyp, 1, masked)
        np.testing.assert_allclose(same_a, same_b, atol=1e-12)
        diff_a = step_scores(pert, task, hyp, 1, plain)
        diff_b = step_scores(pert, task, hyp, 1, masked)
        assert np.max(np.abs(diff_a - diff_b)) > 1e-3

    def test_filled_or_outside_positions_rejected(self):
        vocab, joint, model, task = setup_case()
        hyp = Hypothesis.empty().extend(1, 0, 0.0)
        with pytest.raises(InvalidQuery):
            step_scores(model, task, hyp, 1, ScoringMode.standard())
        with pytest.raises(InvalidQuery):
            step_scores(model, task, Hypothesis.empty(), 0, ScoringMode.standard())

    def test_pivot_length_and_range_checked(self):
        vocab, joint, model, task = setup_case()
        with pytest.raises(ConfigError):
            step_scores(model, task, Hypothesis.empty(), 1, ScoringMode.hcb_pivot((0,)))
        with pytest.raises(ConfigError):
            step_scores(
                model, task, Hypothesis.empty(), 1, ScoringMode.hcb_pivot((0, 9, 0))
            )
