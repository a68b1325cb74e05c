import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mgfte import numeric as nm
from mgfte.numeric import Tensor
from mgfte.prototype import PrototypeSet
from mgfte.reldec import classify_relation, pool_global, relation_loss, relation_matching_score
from oracles import matching_score_reference

Q_MICRO = [0.5, -1.0, 2.0, 0.25]
P_MICRO = [1.0, 0.0, -0.5, 1.5]
WR_MICRO = [[0.2, 0.1], [-0.4, 0.3], [0.3, 0.5], [0.1, 0.1], [0.6, -0.2], [-0.5, 0.2], [0.3, -0.3], [0.0, 0.4]]
VR_MICRO = [[1.5], [-0.5]]
SCORE_MICRO = 1.7000000000000002  # oracles.matching_score_reference: 1.5 * 1.575 - 0.5 * 1.325


class TestPool:
    def test_values(self):
        np.testing.assert_array_equal(pool_global(Tensor([[1.0, 2.0], [3.0, 4.0]])).data, [3, 4, 2, 3])

    def test_single_row(self):
        x = np.array([[0.5, -2.0, 7.0]])
        np.testing.assert_array_equal(pool_global(Tensor(x)).data, np.concatenate([x[0], x[0]]))

    def test_constant(self):
        np.testing.assert_array_equal(pool_global(Tensor(np.full((4, 2), 1.5))).data, [1.5] * 4)

    def test_empty(self):
        with pytest.raises(ValueError):
            pool_global(Tensor(np.zeros((0, 3))))


class TestMatchingScore:
    def test_zero_projection(self):
        rng = np.random.default_rng(0)
        s = relation_matching_score(Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4)),
                                    Tensor(rng.normal(size=(8, 2))), Tensor(np.zeros((2, 1))))
        assert s.item() == 0.0

    def test_constructed_all_ones(self):
        d = 3
        q = Tensor(np.ones(2 * d))
        p = Tensor(np.zeros(2 * d))
        W = np.zeros((4 * d, d))
        W[0] = 1.0  # hidden = q[0] * 1 = 1 for every unit
        s = relation_matching_score(q, p, Tensor(W), Tensor(np.ones((d, 1))))
        assert s.item() == d

    def test_micro_oracle(self):
        s = relation_matching_score(Tensor(Q_MICRO), Tensor(P_MICRO), Tensor(WR_MICRO), Tensor(VR_MICRO))
        assert s.item() == pytest.approx(SCORE_MICRO, abs=1e-12)
        assert matching_score_reference(Q_MICRO, P_MICRO, WR_MICRO, VR_MICRO) == pytest.approx(SCORE_MICRO, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            relation_matching_score(Tensor(np.ones(4)), Tensor(np.ones(2)), Tensor(np.ones((8, 2))), Tensor(np.ones((2, 1))))


def protos(rng, n, d):
    return PrototypeSet(Tensor(rng.normal(size=(n, 5, d))), np.ones((n, 5), dtype=int))


class TestClassify:
    def params(self, rng, d):
        return Tensor(rng.normal(size=(4 * d, d))), Tensor(rng.normal(size=(4 * d, d))), Tensor(rng.normal(size=(d, 1)))

    def test_argmax_and_scores(self):
        rng = np.random.default_rng(1)
        d = 3
        Q = Tensor(rng.normal(size=(4, d)))
        ps = protos(rng, 3, d)
        w, wr, vr = self.params(rng, d)
        idx, scores, (q_hat, p_hat) = classify_relation(Q, ps, w, wr, vr)
        assert idx == int(np.argmax(scores.data))
        assert q_hat.shape == (3, 4, d) and p_hat.shape == (3, 5, d)
        from mgfte.fusion import fuse
        for i in range(3):
            qh, ph = fuse(Q, ps[i], w)
            ref = relation_matching_score(pool_global(qh), pool_global(ph), wr, vr)
            assert scores.data[i] == pytest.approx(ref.item(), rel=1e-12)

    def test_tie_breaks_low(self):
        rng = np.random.default_rng(2)
        d = 2
        ps = PrototypeSet(Tensor(np.tile(rng.normal(size=(1, 5, d)), (2, 1, 1))), np.ones((2, 5), dtype=int))
        w, wr, vr = self.params(rng, d)
        idx, scores, _ = classify_relation(Tensor(rng.normal(size=(3, d))), ps, w, wr, vr)
        assert scores.data[0] == scores.data[1] and idx == 0

    def test_single_relation(self):
        rng = np.random.default_rng(3)
        w, wr, vr = self.params(rng, 2)
        idx, _, _ = classify_relation(Tensor(rng.normal(size=(3, 2))), protos(rng, 1, 2), w, wr, vr)
        assert idx == 0

    def test_permutation_consistent(self):
        rng = np.random.default_rng(4)
        d = 3
        Q = Tensor(rng.normal(size=(5, d)))
        ps = protos(rng, 4, d)
        w, wr, vr = self.params(rng, d)
        idx, scores, _ = classify_relation(Q, ps, w, wr, vr)
        perm = np.array([2, 0, 3, 1])
        ps2 = PrototypeSet(Tensor(ps.matrices.data[perm]), ps.counts[perm])
        idx2, scores2, _ = classify_relation(Q, ps2, w, wr, vr)
        np.testing.assert_allclose(scores2.data, scores.data[perm], rtol=1e-12)
        assert perm[idx2] == idx

    def test_pfm_disabled_uses_raw(self):
        rng = np.random.default_rng(5)
        d = 2
        Q = Tensor(rng.normal(size=(3, d)))
        ps = protos(rng, 2, d)
        w, wr, vr = self.params(rng, d)
        _, scores, _ = classify_relation(Q, ps, w, wr, vr, disable_pfm=True)
        for i in range(2):
            ref = relation_matching_score(pool_global(Q), pool_global(ps[i]), wr, vr)
            assert scores.data[i] == pytest.approx(ref.item(), rel=1e-12)


class TestLoss:
    def test_uniform(self):
        assert relation_loss(Tensor(np.full(5, 0.3)), 2).item() == pytest.approx(math.log(5), rel=1e-14)

    def test_limit(self):
        assert relation_loss(Tensor([60.0, 0.0, 0.0]), 0).item() < 1e-25

    def test_two_scores(self):
        expected = -math.log(math.e / (math.e + 1))
        assert relation_loss(Tensor([1.0, 0.0]), 0).item() == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.313262, abs=1e-6)

    def test_gold_range(self):
        with pytest.raises(ValueError):
            relation_loss(Tensor([1.0, 2.0]), 2)

    @settings(max_examples=80, deadline=None)
    @given(arrays(np.float64, st.integers(1, 6), elements=st.floats(-50, 50)), st.floats(-100, 100), st.data())
    def test_shift_invariance(self, scores, c, data):
        gold = data.draw(st.integers(0, len(scores) - 1))
        a = relation_loss(Tensor(scores), gold).item()
        b = relation_loss(Tensor(scores + c), gold).item()
        assert a >= 0
        assert a == pytest.approx(b, abs=1e-9)
        assert np.argmax(scores) == np.argmax(scores + c) or np.isclose(scores.max(), np.sort(scores)[-2])
