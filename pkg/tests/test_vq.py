import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psqcodec.quantizers import make_rng
from psqcodec.vq import (Codebook, RvqStack, ema_update, kmeans_pp_init, nearest,
                         random_rvq_stack, reinit_dead, rvq_decode, rvq_encode, stagewise_errors,
                         train_codebook, train_rvq, utilization, vq_losses)


def brute_force_centroids(batch, assignments, size):
    out = []
    for k in range(size):
        members = [batch[n] for n in range(len(batch)) if assignments[n] == k]
        out.append(np.mean(members, axis=0))
    return np.array(out)


class TestNearest:
    def test_picks_closest(self):
        cb = Codebook([[0, 0], [1, 1]])
        assert nearest(cb, [0.9, 0.8]) == 1

    def test_tie_goes_to_lowest_index(self):
        cb = Codebook([[1, 0], [-1, 0], [0, 5]])
        assert nearest(cb, [0, 0]) == 0

    def test_single_vector(self):
        cb = Codebook([[3.0, 4.0]])
        np.testing.assert_array_equal(nearest(cb, make_rng(0).standard_normal((10, 2))), 0)

    def test_batch_matches_loop(self):
        rng = make_rng(1)
        cb = Codebook(rng.standard_normal((16, 3)))
        z = rng.standard_normal((40, 3))
        expected = [int(np.argmin([np.sum((v - c) ** 2) for c in cb.vectors])) for v in z]
        np.testing.assert_array_equal(nearest(cb, z), expected)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            nearest(Codebook([[0, 0]]), [1, 2, 3])


class TestLosses:
    def test_zero(self):
        assert vq_losses([1, 2], [1, 2]) == (0, 0, 0)

    def test_arithmetic(self):
        assert vq_losses([1, 0], [0, 0], 0.25) == (1, 1, 1.25)

    def test_beta_zero(self):
        v, _, total = vq_losses([1, 3], [0, 1], 0.0)
        assert total == v


class TestEma:
    def test_decay_zero_is_centroid_step(self):
        rng = make_rng(4)
        batch = rng.standard_normal((200, 3))
        cb = Codebook(rng.standard_normal((5, 3)), decay=0.0, epsilon=1e-15)
        a = nearest(cb, batch)
        assert len(np.unique(a)) == 5
        new = ema_update(cb, batch, a)
        np.testing.assert_allclose(new.vectors, brute_force_centroids(batch, a, 5),
                                   rtol=0, atol=1e-12)

    def test_decay_one_unchanged(self):
        rng = make_rng(5)
        cb = Codebook(rng.standard_normal((4, 2)), decay=1.0)
        batch = rng.standard_normal((30, 2))
        new = ema_update(cb, batch, nearest(cb, batch))
        np.testing.assert_array_equal(new.vectors, cb.vectors)

    def test_empty_cluster_shrinks(self):
        cb = Codebook([[0.0, 0.0], [10.0, 10.0]], decay=0.9)
        batch = np.zeros((8, 2))
        norms = []
        for _ in range(20):
            cb = ema_update(cb, batch, np.zeros(8, dtype=int))
            norms.append(np.linalg.norm(cb.vectors[1]))
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_rejects_bad_assignment(self):
        cb = Codebook([[0.0], [1.0]])
        with pytest.raises(ValueError):
            ema_update(cb, [[0.0]], [2])
        with pytest.raises(ValueError):
            ema_update(cb, [[0.0, 1.0]], [0])

    def test_validation(self):
        with pytest.raises(ValueError):
            Codebook([[0.0]], decay=1.5)
        with pytest.raises(ValueError):
            Codebook([[0.0]], epsilon=0.0)
        with pytest.raises(ValueError):
            Codebook([[0.0]], ema_counts=[-1.0])


class TestReinit:
    def test_all_alive_unchanged(self):
        cb = Codebook([[0.0], [1.0]])
        assert reinit_dead(cb, [[5.0]], 0.5, 0) is cb

    def test_infinite_threshold_replaces_all(self):
        batch = np.array([[7.0, 7.0], [8.0, 8.0], [9.0, 9.0]])
        cb = reinit_dead(Codebook(np.zeros((3, 2))), batch, np.inf, 1)
        for v in cb.vectors:
            assert any(np.array_equal(v, b) for b in batch)
        np.testing.assert_array_equal(cb.ema_counts, 1.0)
        np.testing.assert_array_equal(cb.ema_sums, cb.vectors)

    def test_utilization_does_not_drop(self):
        rng = make_rng(8)
        batch = rng.standard_normal((40, 2))
        cb = Codebook(np.vstack([rng.standard_normal((3, 2)), np.full((5, 2), 50.0)]),
                      ema_counts=[5, 5, 5, 0, 0, 0, 0, 0])
        before = utilization(cb, batch)
        after = utilization(reinit_dead(cb, batch, 0.5, 2), batch)
        assert after >= before

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            reinit_dead(Codebook([[0.0]]), np.zeros((0, 1)), 1.0, 0)


class TestCodebookFile:
    def test_bytes_roundtrip(self):
        rng = make_rng(9)
        cb = Codebook(rng.standard_normal((6, 3)), rng.uniform(0, 2, 6),
                      rng.standard_normal((6, 3)), 0.95, 1e-4)
        back = Codebook.from_bytes(cb.to_bytes())
        np.testing.assert_array_equal(back.vectors, cb.vectors)
        np.testing.assert_array_equal(back.ema_counts, cb.ema_counts)
        np.testing.assert_array_equal(back.ema_sums, cb.ema_sums)
        assert (back.decay, back.epsilon) == (0.95, 1e-4)

    def test_magic_checked(self):
        data = bytearray(Codebook([[1.0]]).to_bytes())
        data[0:4] = b"XXXX"
        with pytest.raises(ValueError):
            Codebook.from_bytes(bytes(data))


class TestTraining:
    def test_kmeans_recovers_clusters(self):
        rng = make_rng(10)
        centers = np.array([[-3.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
        data = np.vstack([c + 0.1 * rng.standard_normal((100, 2)) for c in centers])
        cb = train_codebook(data, 3, 0, iterations=30, decay=0.5)
        got = cb.vectors[np.argsort(cb.vectors[:, 0] + 10 * cb.vectors[:, 1])]
        want = centers[np.argsort(centers[:, 0] + 10 * centers[:, 1])]
        np.testing.assert_allclose(got, want, atol=0.05)

    def test_kmeans_pp_picks_distinct_points(self):
        data = np.array([[0.0], [0.0], [1.0], [2.0]])
        cb = kmeans_pp_init(data, 3, 0)
        assert len(np.unique(cb.vectors)) == 3


class TestRvq:
    def test_exact_single_stage(self):
        z = np.array([0.3, -0.7])
        stack = RvqStack([Codebook([[1.0, 1.0], z])])
        np.testing.assert_array_equal(rvq_decode(stack, rvq_encode(stack, z)), z)

    def test_zero_second_stage(self):
        rng = make_rng(11)
        first = Codebook(rng.standard_normal((4, 2)))
        stack = RvqStack([first, Codebook(np.zeros((1, 2)))])
        z = rng.standard_normal(2)
        k = rvq_encode(stack, z)
        np.testing.assert_array_equal(rvq_decode(stack, k), first.vectors[nearest(first, z)])

    def test_all_zero_codebooks(self):
        stack = RvqStack([Codebook(np.zeros((3, 2))), Codebook(np.zeros((2, 2)))])
        np.testing.assert_array_equal(rvq_decode(stack, rvq_encode(stack, [1.0, 2.0])), 0.0)

    def test_telescoping(self):
        stack = random_rvq_stack(3, 4, 8, 12)
        z = make_rng(13).standard_normal(3)
        r = z.copy()
        for cb in stack.stages:
            r = r - cb.vectors[nearest(cb, r)]
        np.testing.assert_allclose(z - rvq_decode(stack, rvq_encode(stack, z)), r, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_monotone_with_zero_codevector(self, seed):
        stack = random_rvq_stack(4, 3, 6, seed)
        z = make_rng(seed + 1).standard_normal(4)
        e = stagewise_errors(stack, z)
        assert np.all(np.diff(e) <= 0)

    def test_trained_stack_refines(self):
        data = make_rng(14).standard_normal((300, 2))
        stack = train_rvq(data, 3, 8, 0, iterations=10)
        errs = np.array([stagewise_errors(stack, z) for z in data[:50]])
        assert np.all(np.diff(errs, axis=1) <= 0)
        assert stack.bits_per_frame == 9

    def test_decode_validates_indices(self):
        stack = random_rvq_stack(2, 2, 4, 0)
        with pytest.raises(ValueError):
            rvq_decode(stack, [0])
        with pytest.raises(ValueError):
            rvq_decode(stack, [0, 9])

    def test_mismatched_stage_dims(self):
        with pytest.raises(ValueError):
            RvqStack([Codebook(np.zeros((2, 2))), Codebook(np.zeros((2, 3)))])
