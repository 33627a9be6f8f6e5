import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamfill.errors import InvalidInput
from beamfill.metrics import EvalRecord, bleu_k, top_k_hit

spans = st.lists(st.integers(0, 4), min_size=1, max_size=6)


class TestTopK:
    def test_hit_at_rank(self):
        preds = [(0, 1), (2, 2), (1, 0)]
        assert not top_k_hit(preds, (1, 0), 1)
        assert not top_k_hit(preds, (1, 0), 2)
        assert top_k_hit(preds, (1, 0), 3)

    def test_miss(self):
        assert not top_k_hit([(0,), (1,)], (2,), 5)

    def test_k_validation(self):
        with pytest.raises(InvalidInput):
            top_k_hit([(0,)], (0,), 0)

    @given(st.lists(spans, max_size=6), spans, st.integers(1, 6))
    def test_monotone_in_k(self, preds, truth, k):
        if top_k_hit(preds, truth, k):
            assert top_k_hit(preds, truth, k + 1)


class TestBleu:
    def test_identical_spans_score_100(self):
        assert bleu_k((0, 1, 2, 1), (0, 1, 2, 1)) == pytest.approx(100.0)

    def test_last_token_differs_zeroes_the_trigram(self):
        # precisions 2/3, 1/2, 0 -> unsmoothed geometric mean is 0
        assert bleu_k((0, 1, 2), (0, 1, 3)) == 0.0

    def test_five_token_hand_value(self):
        # precisions 4/5, 3/4, 2/3, 1/2; product 1/5
        want = 100.0 * math.exp(-math.log(5) / 4)
        assert bleu_k((0, 1, 2, 3, 4), (0, 1, 2, 3, 0)) == pytest.approx(want)
        assert bleu_k((0, 1, 2, 3, 4), (0, 1, 2, 3, 0)) == pytest.approx(66.8740305, abs=1e-6)

    def test_single_token(self):
        assert bleu_k((2,), (2,)) == pytest.approx(100.0)
        assert bleu_k((2,), (0,)) == 0.0

    def test_unigram_only_overlap_still_zero_on_pairs(self):
        # shared tokens in the wrong order: unigram 1, bigram 0
        assert bleu_k((0, 1), (1, 0)) == 0.0

    def test_clipping_counts_repeats_once(self):
        # candidate repeats a token the reference holds once:
        # unigram precision 2/3 with clipping, bigram 1/2, trigram 0
        assert bleu_k((1, 1, 0), (1, 0, 2)) == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInput):
            bleu_k((0, 1), (0, 1, 2))

    def test_empty_rejected(self):
        with pytest.raises(InvalidInput):
            bleu_k((), ())

    @given(spans)
    def test_self_similarity(self, span):
        assert bleu_k(span, span) == pytest.approx(100.0)

    @given(spans, spans)
    def test_bounds_and_symmetry_of_support(self, a, b):
        if len(a) != len(b):
            return
        score = bleu_k(a, b)
        assert 0.0 <= score <= 100.0
        # zero iff some order of n-gram overlap vanishes; either way the
        # reverse direction stays in bounds too
        assert 0.0 <= bleu_k(b, a) <= 100.0


class TestEvalRecord:
    def test_build_finds_hit_rank(self):
        r = EvalRecord.build("t0", "beam", (1, 0), [(0, 0), (1, 0), (1, 1)])
        assert r.hit_rank == 2
        assert r.bleu == bleu_k((0, 0), (1, 0))

    def test_build_without_hit(self):
        r = EvalRecord.build("t1", "beam", (2, 2), [(0, 0), (1, 0)])
        assert r.hit_rank is None

    def test_top_prediction_drives_bleu(self):
        r = EvalRecord.build("t2", "beam", (0, 1, 2), [(0, 1, 2), (2, 2, 2)])
        assert r.bleu == pytest.approx(100.0)

    def test_invalid_hit_rank_rejected(self):
        with pytest.raises(ValueError):
            EvalRecord(
                task_id="t3",
                method="m",
                truth=(0,),
                predictions=((0,),),
                hit_rank=2,
                bleu=100.0,
            )

    def test_bleu_range_enforced(self):
        with pytest.raises(ValueError):
            EvalRecord(
                task_id="t4",
                method="m",
                truth=(0,),
                predictions=((0,),),
                hit_rank=1,
                bleu=101.0,
            )
