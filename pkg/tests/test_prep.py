import numpy as np
import pytest

from collode import colloc, odesim, prep


def sine_dataset(n=200, sigma=0.0, seed=0):
    times = np.linspace(0.0, 4 * np.pi, n)
    clean = np.column_stack([np.sin(times), np.cos(times)])
    data = prep.Dataset(times, clean)
    if sigma > 0:
        data = prep.add_noise(data, sigma, seed)
    return data


class TestDataset:
    def test_rejects_nonincreasing_times(self):
        with pytest.raises(ValueError):
            prep.Dataset(np.array([0.0, 0.0, 1.0]), np.zeros((3, 1)))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            prep.Dataset(np.array([0.0, 1.0]), np.array([[np.nan], [0.0]]))

    def test_column_promotion(self):
        data = prep.Dataset(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
        assert data.y_obs.shape == (2, 1)


class TestAddNoise:
    def test_sigma_zero_identity(self):
        data = sine_dataset()
        noisy = prep.add_noise(data, 0.0, seed=5)
        np.testing.assert_array_equal(noisy.y_obs, data.y_obs)

    def test_same_seed_same_noise(self):
        data = sine_dataset()
        a = prep.add_noise(data, 0.1, seed=42)
        b = prep.add_noise(data, 0.1, seed=42)
        np.testing.assert_array_equal(a.y_obs, b.y_obs)

    def test_noise_level(self):
        # sample std of 400 draws at sigma=0.1 concentrates in [0.08, 0.12]
        data = sine_dataset(n=200)
        for seed in range(5):
            noisy = prep.add_noise(data, 0.1, seed=seed)
            sd = np.std(noisy.y_obs - data.y_obs)
            assert 0.08 <= sd <= 0.12

    def test_meta_updated(self):
        noisy = prep.add_noise(sine_dataset(), 0.1, seed=3)
        assert noisy.meta["sigma"] == 0.1
        assert any("add_noise" in step for step in noisy.meta["history"])


class TestResample:
    def test_node_coincident_copies(self):
        times = np.linspace(0.0, 1.0, 11)
        data = prep.Dataset(times, np.column_stack([times**2, times]))
        grid = colloc.build_grid(2, 0.0, 1.0)  # endpoints only
        out = prep.resample_to_grid(data, grid)
        np.testing.assert_array_equal(out.y_obs[0], data.y_obs[0])
        np.testing.assert_array_equal(out.y_obs[-1], data.y_obs[-1])

    def test_linear_midpoint(self):
        data = prep.Dataset(np.array([0.0, 1.0]), np.array([[0.0], [1.0]]))
        grid = colloc.build_grid(3, 0.0, 1.0)
        out = prep.resample_to_grid(data, grid)
        np.testing.assert_allclose(out.y_obs[1, 0], 0.5, atol=1e-14)

    def test_dense_quadratic_error_bound(self):
        times = np.arange(0.0, 1.0 + 1e-12, 0.005)
        data = prep.Dataset(times, (times**2)[:, None])
        grid = colloc.build_grid(50, 0.0, 1.0)
        out = prep.resample_to_grid(data, grid)
        exact = grid.nodes_time**2
        assert np.abs(out.y_obs[:, 0] - exact).max() <= 1e-4

    def test_out_of_range_rejected(self):
        data = prep.Dataset(np.linspace(0, 1, 5), np.zeros((5, 1)))
        grid = colloc.build_grid(4, 0.0, 2.0)
        with pytest.raises(ValueError):
            prep.resample_to_grid(data, grid)

    def test_exact_on_affine(self):
        times = np.linspace(0.0, 3.0, 37)
        data = prep.Dataset(times, (2.5 * times - 1.0)[:, None])
        grid = colloc.build_grid(13, 0.0, 3.0)
        out = prep.resample_to_grid(data, grid)
        np.testing.assert_allclose(
            out.y_obs[:, 0], 2.5 * grid.nodes_time - 1.0, atol=1e-10
        )


class TestLoess:
    def test_reproduces_linear(self):
        times = np.linspace(0.0, 2.0, 60)
        data = prep.Dataset(times, (3.0 * times - 0.7)[:, None])
        out = prep.loess_smooth(data, span=0.2)
        np.testing.assert_allclose(out.y_obs, data.y_obs, atol=1e-10)

    def test_variance_reduction_on_constant(self):
        rng_seeds = range(4)
        times = np.linspace(0.0, 1.0, 100)
        for seed in rng_seeds:
            noisy = prep.add_noise(
                prep.Dataset(times, np.zeros((100, 1))), 0.3, seed=seed
            )
            smooth = prep.loess_smooth(noisy, span=0.2)
            assert np.var(smooth.y_obs) <= np.var(noisy.y_obs)

    def test_smoothing_beats_noise_on_sine(self):
        clean = sine_dataset(n=200)
        noisy = prep.add_noise(clean, 0.1, seed=11)
        smooth = prep.loess_smooth(noisy, span=0.1)
        rmse_noisy = np.sqrt(np.mean((noisy.y_obs - clean.y_obs) ** 2))
        rmse_smooth = np.sqrt(np.mean((smooth.y_obs - clean.y_obs) ** 2))
        assert rmse_smooth < rmse_noisy

    def test_window_too_small(self):
        data = sine_dataset(n=20)
        with pytest.raises(ValueError):
            prep.loess_smooth(data, span=0.05)

    def test_bad_span(self):
        with pytest.raises(ValueError):
            prep.loess_smooth(sine_dataset(), span=0.0)


class TestInitStates:
    def test_exact_on_clean_linear(self):
        times = np.linspace(0.0, 1.0, 50)
        data = prep.Dataset(times, np.column_stack([times, 1.0 - times]))
        grid = colloc.build_grid(12, 0.0, 1.0)
        init = prep.init_states(data, grid, span=0.2)
        np.testing.assert_allclose(init[:, 0], grid.nodes_time, atol=1e-9)
        np.testing.assert_allclose(init[:, 1], 1.0 - grid.nodes_time, atol=1e-9)

    def test_shape(self):
        data = sine_dataset()
        grid = colloc.build_grid(31, data.times[0], data.times[-1])
        assert prep.init_states(data, grid).shape == (31, 2)

    def test_near_truth_on_clean_vdp(self):
        system = odesim.vdp_system(1.0, 1.0, 1.0)
        times = np.linspace(0.0, 10.0, 200)
        traj = odesim.rk4_integrate(system, np.array([0.0, 1.0]), times, substeps=20)
        data = prep.Dataset(times, traj.states)
        grid = colloc.build_grid(50, 0.0, 10.0)
        init = prep.init_states(data, grid, span=0.03)
        ref = odesim.rk4_integrate(
            system, np.array([0.0, 1.0]), grid.nodes_time, substeps=200
        )
        # local-linear smoothing flattens the sharp velocity peaks a little
        assert np.abs(init - ref.states).max() < 0.1
        assert np.sqrt(np.mean((init - ref.states) ** 2)) < 0.02


class TestDatasetIo:
    def test_round_trip(self, tmp_path):
        data = prep.add_noise(sine_dataset(n=31), 0.05, seed=9)
        path = tmp_path / "data.csv"
        prep.save_dataset(data, path)
        back = prep.load_dataset(path)
        np.testing.assert_array_equal(back.times, data.times)
        np.testing.assert_array_equal(back.y_obs, data.y_obs)
        assert back.meta["sigma"] == 0.05

    def test_header(self, tmp_path):
        path = tmp_path / "data.csv"
        prep.save_dataset(sine_dataset(n=5), path)
        assert path.read_text().splitlines()[0] == "t,y0,y1"
