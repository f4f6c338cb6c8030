import numpy as np
import pytest

from psqcodec import toytrain
from psqcodec.quantizers import dequantize, grid_from_levels, make_grid, make_rng, quantize, uniform_noise
from psqcodec.toytrain import Layer, MlpNetwork


def identity_pair(q=2):
    enc = MlpNetwork([Layer(np.eye(q), np.zeros(q), "tanh")])
    dec = MlpNetwork([Layer(np.eye(q), np.zeros(q), "identity")])
    return enc, dec


def finite_difference_grads(enc, dec, grid, x, mode, noise, h=1e-6):
    """Central differences over every parameter of both networks."""
    out = []
    for net in (enc, dec):
        for p in net.parameters():
            g = np.zeros_like(p)
            for i in np.ndindex(p.shape):
                old = p[i]
                p[i] = old + h
                up, _, _ = toytrain.loss_and_grads(enc, grid, dec, x, mode, noise=noise)
                p[i] = old - h
                down, _, _ = toytrain.loss_and_grads(enc, grid, dec, x, mode, noise=noise)
                p[i] = old
                g[i] = (up - down) / (2 * h)
            out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestTwoMoons:
    def test_noiseless_points_on_arcs(self):
        data = toytrain.two_moons(4, noise_std=0.0, seed=0)
        raw = data.points * data.scale + np.array(data.center)
        upper = np.isclose(raw[:, 0] ** 2 + raw[:, 1] ** 2, 1.0) & (raw[:, 1] >= -1e-12)
        lower = (np.isclose((raw[:, 0] - 1) ** 2 + (raw[:, 1] - 0.5) ** 2, 1.0)
                 & (raw[:, 1] <= 0.5 + 1e-12))
        assert np.all(upper | lower)
        assert upper.sum() == 2 and lower.sum() == 2

    def test_within_unit_square(self):
        data = toytrain.two_moons(2000, noise_std=0.3, seed=1)
        assert np.max(np.abs(data.points)) <= 1.0

    def test_deterministic(self):
        a = toytrain.two_moons(100, seed=5).points
        b = toytrain.two_moons(100, seed=5).points
        np.testing.assert_array_equal(a, b)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            toytrain.two_moons(0)
        with pytest.raises(ValueError):
            toytrain.two_moons(10, noise_std=-1)


class TestForward:
    def test_fine_grid_identity_nets(self):
        grid = make_grid(8, 2)
        enc, dec = identity_pair()
        x = make_rng(0).uniform(-2, 2, (100, 2))
        xhat, _ = toytrain.forward(enc, grid, dec, x, "eval")
        assert np.max(np.abs(xhat - np.tanh(x))) <= grid.delta / 2

    def test_st_forward_equals_eval(self):
        grid = grid_from_levels((4, 2))
        enc, dec = toytrain.init_psq(2, seed=1)
        x = toytrain.two_moons(50, seed=1).points
        a, _ = toytrain.forward(enc, grid, dec, x, "st")
        b, _ = toytrain.forward(enc, grid, dec, x, "eval")
        np.testing.assert_array_equal(a, b)

    def test_eval_uses_hard_quantization(self):
        grid = grid_from_levels((4, 2))
        enc, dec = toytrain.init_psq(2, seed=2)
        x = toytrain.two_moons(50, seed=2).points
        xhat, cache = toytrain.forward(enc, grid, dec, x, "eval")
        z, _ = enc.forward(x)
        np.testing.assert_array_equal(cache["zq"], dequantize(grid, quantize(grid, z)))

    def test_encoder_output_in_open_cube(self):
        enc, _ = toytrain.init_psq(3, seed=8)
        z, _ = enc.forward(make_rng(8).uniform(-1, 1, (500, 2)))
        assert np.all(np.abs(z) < 1)

    def test_eval_independent_of_training_mode(self):
        grid = grid_from_levels((4, 2))
        data = toytrain.two_moons(200, seed=0)
        x = data.points[:20]
        outs = []
        for mode in ("st", "noise"):
            cfg = toytrain.TrainConfig(mode=mode, steps=0)
            res = toytrain.train_psq(cfg, data)
            outs.append(toytrain.forward(res.encoder, grid, res.decoder, x, "eval")[0])
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_noise_mode_adds_bounded_noise(self):
        grid = make_grid(2, 2)
        enc, dec = identity_pair()
        x = make_rng(3).standard_normal((500, 2))
        _, cache = toytrain.forward(enc, grid, dec, x, "noise", seed=4)
        d = cache["zq"] - cache["z"]
        assert np.all(np.abs(d) <= grid.delta / 2)

    def test_dimension_mismatch(self):
        enc, dec = identity_pair(3)
        with pytest.raises(ValueError):
            toytrain.forward(enc, make_grid(2, 2), dec, np.zeros((1, 3)))


class TestGradients:
    @pytest.mark.parametrize("mode", ["noise", "st"])
    def test_finite_differences(self, mode):
        grid = grid_from_levels((4, 2))
        enc, dec = toytrain.init_psq(2, hidden=(6, 5), seed=3)
        x = toytrain.two_moons(10, seed=3).points
        noise = uniform_noise(grid, (10,), 9) if mode == "noise" else None
        _, ge, gd = toytrain.loss_and_grads(enc, grid, dec, x, mode, noise=noise)
        if mode == "st":
            # hard quantization is piecewise constant: differentiate the decoder only
            num = finite_difference_grads(enc, dec, grid, x, mode, noise)[len(ge):]
            assert max_relative_error(gd, num) <= 1e-5
        else:
            num = finite_difference_grads(enc, dec, grid, x, mode, noise)
            assert max_relative_error(ge + gd, num) <= 1e-5

    def test_linear_autoencoder_closed_form(self):
        grid = make_grid(12, 2)
        rng = make_rng(5)
        E = rng.normal(0, 0.3, (2, 3))
        D = rng.normal(0, 0.3, (3, 2))
        b, c = rng.normal(0, 0.1, 2), rng.normal(0, 0.1, 3)
        enc = MlpNetwork([Layer(E, b, "identity")])
        dec = MlpNetwork([Layer(D, c, "identity")])
        x = rng.uniform(-1, 1, (10, 3))
        _, ge, gd = toytrain.loss_and_grads(enc, grid, dec, x, "st")
        zq = dequantize(grid, quantize(grid, x @ E.T + b))
        r = zq @ D.T + c - x
        scale = 2.0 / r.size
        np.testing.assert_allclose(gd[0], scale * r.T @ zq, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(gd[1], scale * r.sum(axis=0), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(ge[0], scale * (r @ D).T @ x, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(ge[1], scale * (r @ D).sum(axis=0), rtol=1e-12, atol=1e-15)

    def test_zero_learning_rate(self):
        grid = grid_from_levels((4, 2))
        enc, dec = toytrain.init_psq(2, seed=4)
        cfg = toytrain.TrainConfig(learning_rate=0.0)
        x = toytrain.two_moons(16, seed=4).points
        e2, d2, _ = toytrain.backward_step(enc, dec, grid, x, cfg)
        for a, b in zip(enc.parameters() + dec.parameters(), e2.parameters() + d2.parameters()):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        grid = grid_from_levels((4, 2))
        enc, dec = toytrain.init_psq(2, seed=4)
        dec.layers[-1].weights[0, 0] = np.inf
        cfg = toytrain.TrainConfig(learning_rate=0.1)
        with pytest.raises(toytrain.TrainingDiverged):
            toytrain.backward_step(enc, dec, grid, toytrain.two_moons(8).points, cfg)


class TestRegions:
    def test_identity_net_gives_quadrants(self):
        grid = make_grid(1, 2)
        enc, dec = identity_pair()
        raster, points = toytrain.decision_regions(enc, dec, grid, 64)
        assert len(points) == 4
        half = 32
        for block in (raster[:half, :half], raster[:half, half:],
                      raster[half:, :half], raster[half:, half:]):
            assert len(np.unique(block)) == 1
        # top row is y = +1, first column is x = -1
        expected = grid.flat_index(np.array([[-1, 0]]))[0]
        assert raster[0, 0] == expected

    def test_region_count_bounded(self):
        grid = grid_from_levels((4, 2))
        enc, dec = toytrain.init_psq(2, seed=6)
        raster, _ = toytrain.decision_regions(enc, dec, grid, 50)
        assert len(np.unique(raster)) <= grid.num_cells

    def test_region_codepoints_match_codebook(self):
        grid = grid_from_levels((4, 2))
        enc, dec = toytrain.init_psq(2, seed=7)
        _, points = toytrain.decision_regions(enc, dec, grid, 40)
        book = toytrain.effective_codebook(dec, grid)
        for k, c in points.items():
            np.testing.assert_array_equal(c, book[k])

    def test_effective_codebook_order(self):
        grid = grid_from_levels((4, 2))
        _, dec = identity_pair()
        book = toytrain.effective_codebook(dec, grid)
        np.testing.assert_allclose(book, dequantize(grid, grid.cell_indices()))


class TestTraining:
    def test_short_run_improves(self):
        data = toytrain.two_moons(500, seed=0)
        cfg = toytrain.TrainConfig(steps=400, log_every=100)
        res = toytrain.train_psq(cfg, data)
        assert res.final_mse < res.initial_mse
        assert [s for s, _ in res.history] == [0, 100, 200, 300, 400]

    def test_zero_steps_is_initialization(self):
        data = toytrain.two_moons(200, seed=0)
        res = toytrain.train_psq(toytrain.TrainConfig(steps=0), data)
        assert res.final_mse == res.initial_mse

    def test_deterministic(self):
        data = toytrain.two_moons(200, seed=0)
        cfg = toytrain.TrainConfig(steps=50, mode="noise")
        a = toytrain.train_psq(cfg, data)
        b = toytrain.train_psq(cfg, data)
        assert a.history == b.history

    def test_config_validation(self):
        with pytest.raises(ValueError):
            toytrain.TrainConfig(mode="bogus")
        with pytest.raises(ValueError):
            toytrain.TrainConfig(optimizer="rmsprop")
        with pytest.raises(ValueError):
            toytrain.TrainConfig(steps=-1)


class TestBaseline:
    def test_brute_force_matches_manual_grid(self):
        data = toytrain.two_moons(300, seed=2)
        mse, levels = toytrain.direct_grid_baseline(data, 3)
        assert levels in [(1, 8), (2, 4), (4, 2), (8, 1)]
        pts = data.points
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        recon = np.empty_like(pts)
        for q, n in enumerate(levels):
            w = (hi[q] - lo[q]) / n
            k = np.minimum(((pts[:, q] - lo[q]) // w), n - 1)
            recon[:, q] = lo[q] + (k + 0.5) * w
        assert mse == pytest.approx(np.mean((recon - pts) ** 2), rel=1e-12)
