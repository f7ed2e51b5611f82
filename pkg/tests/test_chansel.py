"""Channel selection: hand-evaluated gates, tie policy, pooling oracles."""

import numpy as np
import pytest

from adhocsv import diffcore as dc
from adhocsv.chansel import (
    DegenerateProjectionError,
    GPoolParams,
    channel_scores,
    gpool,
    init_gpool_params,
    prior_select,
    utterance_pool,
)
from adhocsv.diffcore import Parameter, Tensor, vjp_check
from adhocsv.graphs import SelectionMask, build_complete


def gp(vec, name="p"):
    return GPoolParams(p=Parameter(name, np.asarray(vec, dtype=float)))


class TestGPool:
    def test_hand_evaluated_gates(self):
        # p = [1, 0]; rows score 3, 1, 2; k = 2 keeps channels 0 and 2,
        # gated to 3*sigmoid(3) and 2*sigmoid(2).
        z = np.array([[[3.0, 0.0]], [[1.0, 0.0]], [[2.0, 0.0]]])  # (C=3, T=1, D=2)
        result = gpool(Tensor(z), build_complete(3), gp([1.0, 0.0]), k=2)
        assert result.indices.tolist() == [0, 2]
        out = result.features.data
        assert abs(out[0, 0, 0] - 2.857722) < 1e-6
        assert abs(out[1, 0, 0] - 1.761594) < 1e-6
        assert np.allclose(out[:, :, 1], 0.0)

    def test_k_one_keeps_unique_max(self):
        z = np.array([[[0.0]], [[5.0]], [[1.0]]])
        result = gpool(Tensor(z), build_complete(3), gp([1.0]), k=1)
        assert result.indices.tolist() == [1]
        assert result.adjacency.n == 1
        assert np.array_equal(result.adjacency.entries, [[True]])

    def test_tie_breaks_to_lower_index(self):
        z = np.array([[[2.0]], [[1.0]], [[2.0]]])  # channels 0 and 2 tie
        result = gpool(Tensor(z), build_complete(3), gp([1.0]), k=1)
        assert result.indices.tolist() == [0]

    def test_scores_from_time_average(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((4, 6, 3))
        p = gp(rng.standard_normal(3))
        q = channel_scores(Tensor(z), p).data
        expected = z.mean(axis=1) @ p.p.data / np.linalg.norm(p.p.data)
        assert np.allclose(q, expected, atol=1e-12)

    def test_selection_invariant_under_positive_scaling(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal((6, 4, 5))
        base = rng.standard_normal(5)
        reference = gpool(Tensor(z), build_complete(6), gp(base), k=3).indices
        for c in (0.5, 2.0, 173.25):
            scaled = gpool(Tensor(z), build_complete(6), gp(c * base), k=3).indices
            assert np.array_equal(scaled, reference)
            order_ref = np.argsort(channel_scores(Tensor(z), gp(base)).data, kind="stable")
            order_scaled = np.argsort(channel_scores(Tensor(z), gp(c * base)).data, kind="stable")
            assert np.array_equal(order_ref, order_scaled)

    def test_gates_strictly_attenuate(self):
        rng = np.random.default_rng(2)
        z = rng.standard_normal((5, 3, 4))
        result = gpool(Tensor(z), build_complete(5), gp(rng.standard_normal(4)), k=3)
        assert np.all(result.gates > 0.0) and np.all(result.gates < 1.0)
        assert np.allclose(result.features.data, z[result.indices] * result.gates[:, None, None])

    def test_adjacency_restricted_to_selection(self):
        from adhocsv.graphs import build_temporal_span

        z = np.array([[[3.0]], [[1.0]], [[2.0]], [[0.5]]])
        a = build_temporal_span(4, 1)  # chain graph stands in for a sparse spatial graph
        result = gpool(Tensor(z), a, gp([1.0]), k=2)
        assert result.indices.tolist() == [0, 2]
        assert np.array_equal(result.adjacency.entries, np.eye(2, dtype=bool))

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            c = int(rng.integers(2, 9))
            z = rng.standard_normal((c, 4, 6))
            p = rng.standard_normal(6)
            k = int(rng.integers(1, c + 1))
            result = gpool(Tensor(z), build_complete(c), gp(p), k=k)
            q = z.mean(axis=1) @ (p / np.linalg.norm(p))
            oracle = sorted(sorted(range(c), key=lambda i: (-q[i], i))[:k])
            assert result.indices.tolist() == oracle

    def test_zero_projection_rejected(self):
        z = np.zeros((2, 1, 3))
        with pytest.raises(DegenerateProjectionError):
            gpool(Tensor(z), build_complete(2), gp([0.0, 0.0, 0.0]), k=1)

    def test_k_out_of_range(self):
        z = np.zeros((2, 1, 3))
        params = gp([1.0, 0.0, 0.0])
        for bad in (0, 3):
            with pytest.raises(ValueError):
                gpool(Tensor(z), build_complete(2), params, k=bad)

    def test_gradients_at_stable_topk(self):
        rng = np.random.default_rng(4)
        c, t, d, k = 4, 3, 4, 2
        while True:
            z = rng.standard_normal((c, t, d))
            p = rng.standard_normal(d)
            q = z.mean(axis=1) @ (p / np.linalg.norm(p))
            gap = np.sort(q)[::-1]
            if gap[k - 1] - gap[k] > 1e-2:  # top-k set stable under FD perturbation
                break
        params = gp(p)

        def fn(zt, pt):
            return gpool(zt, build_complete(c), params, k=k).features

        err = vjp_check(fn, [z, params.p], rng=rng)
        assert err < 1e-5


class TestPriorSelect:
    def test_all_true_is_identity(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal((4, 3, 2))
        out = prior_select(Tensor(z), SelectionMask(np.ones(4, dtype=bool)))
        assert np.array_equal(out.data, z)

    def test_single_channel(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((4, 5, 2))
        out = prior_select(Tensor(z), SelectionMask(np.array([True, False, False, False])))
        assert out.shape == (1, 5, 2)
        assert np.array_equal(out.data[0], z[0])

    def test_matches_row_filter_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            c = int(rng.integers(2, 9))
            z = rng.standard_normal((c, 3, 4))
            selected = rng.random(c) < 0.5
            if not selected.any():
                selected[int(rng.integers(c))] = True
            out = prior_select(Tensor(z), SelectionMask(selected)).data
            oracle = np.stack([z[i] for i in range(c) if selected[i]])
            assert np.array_equal(out, oracle)

    def test_mask_size_mismatch(self):
        z = np.zeros((3, 2, 2))
        with pytest.raises(dc.ShapeError):
            prior_select(Tensor(z), SelectionMask(np.array([True, False])))


class TestUtterancePool:
    def test_constant_rows(self):
        r = np.array([1.5, -2.0, 0.25])
        z = np.tile(r, (4, 6, 1))
        out = utterance_pool(Tensor(z))
        assert np.allclose(out.data, r, atol=1e-12)

    def test_two_row_average(self):
        z = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        out = utterance_pool(Tensor(z))
        assert np.allclose(out.data, [0.5, 0.5])

    def test_matches_loop_sum_oracle(self):
        rng = np.random.default_rng(8)
        z = rng.standard_normal((3, 5, 4))
        out = utterance_pool(Tensor(z)).data
        acc = np.zeros(4)
        for kk in range(3):
            for tt in range(5):
                acc += z[kk, tt]
        assert np.max(np.abs(out - acc / 15)) < 1e-12

    def test_pool_after_select_matches_masked_mean(self):
        rng = np.random.default_rng(9)
        z = rng.standard_normal((6, 4, 3))
        selected = np.array([True, False, True, True, False, False])
        pooled = utterance_pool(prior_select(Tensor(z), SelectionMask(selected))).data
        oracle = z[selected].reshape(-1, 3).mean(axis=0)
        assert np.allclose(pooled, oracle, atol=1e-12)

    def test_gradient(self):
        rng = np.random.default_rng(10)
        err = vjp_check(lambda zt: utterance_pool(zt), [rng.standard_normal((2, 3, 4))], rng=rng)
        assert err < 1e-8


def test_init_gpool_params_nonzero():
    params = init_gpool_params(8, np.random.default_rng(11))
    assert np.linalg.norm(params.p.data) > 0.0
