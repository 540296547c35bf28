import numpy as np
import pytest

from collode import colloc


def brute_force_lagrange_deriv(nodes, j, x, h=1e-6):
    """Central-difference derivative of the j-th Lagrange basis polynomial."""

    def ell(t):
        val = 1.0
        for k, xk in enumerate(nodes):
            if k != j:
                val *= (t - xk) / (nodes[j] - xk)
        return val

    return (ell(x + h) - ell(x - h)) / (2 * h)


class TestChebyshevNodes:
    def test_n2(self):
        np.testing.assert_allclose(colloc.chebyshev_nodes(2), [1.0, -1.0], atol=1e-15)

    def test_n3(self):
        np.testing.assert_allclose(colloc.chebyshev_nodes(3), [1.0, 0.0, -1.0], atol=1e-15)

    def test_n5(self):
        expected = [1.0, 0.7071067811865476, 0.0, -0.7071067811865476, -1.0]
        np.testing.assert_allclose(colloc.chebyshev_nodes(5), expected, atol=1e-15)

    def test_descending_order(self):
        nodes = colloc.chebyshev_nodes(17)
        assert np.all(np.diff(nodes) < 0)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            colloc.chebyshev_nodes(1)


class TestBarycentricWeights:
    def test_two_nodes(self):
        np.testing.assert_allclose(
            colloc.barycentric_weights([-1.0, 1.0]), [-0.5, 0.5]
        )

    def test_three_nodes(self):
        np.testing.assert_allclose(
            colloc.barycentric_weights([-1.0, 0.0, 1.0]), [0.5, -1.0, 0.5]
        )

    @pytest.mark.parametrize("h", [0.1, 2.0, -3.5])
    def test_pair_with_spacing(self, h):
        np.testing.assert_allclose(
            colloc.barycentric_weights([0.0, h]), [-1.0 / h, 1.0 / h]
        )

    def test_duplicate_nodes(self):
        with pytest.raises(colloc.DegenerateGridError):
            colloc.barycentric_weights([0.0, 1.0, 1.0])

    def test_no_zero_weights_large_n(self):
        nodes = colloc.chebyshev_nodes(80)[::-1]
        w = colloc.barycentric_weights(nodes)
        assert np.all(w != 0)
        assert np.all(np.isfinite(w))


class TestDifferentiationMatrix:
    def test_two_nodes(self):
        nodes = np.array([-1.0, 1.0])
        d = colloc.differentiation_matrix(nodes, colloc.barycentric_weights(nodes))
        np.testing.assert_allclose(d, [[-0.5, 0.5], [-0.5, 0.5]], atol=1e-15)
        np.testing.assert_allclose(d @ nodes, [1.0, 1.0], atol=1e-15)

    def test_three_nodes_frozen_oracle(self):
        nodes = np.array([-1.0, 0.0, 1.0])
        d = colloc.differentiation_matrix(nodes, colloc.barycentric_weights(nodes))
        expected = [[-1.5, 2.0, -0.5], [-0.5, 0.0, 0.5], [0.5, -2.0, 1.5]]
        np.testing.assert_allclose(d, expected, atol=1e-12)
        np.testing.assert_allclose(d @ nodes**2, 2 * nodes, atol=1e-12)

    def test_matches_brute_force_basis_derivatives(self):
        rng = np.random.default_rng(3)
        nodes = np.sort(rng.uniform(-1, 1, size=6))
        d = colloc.differentiation_matrix(nodes, colloc.barycentric_weights(nodes))
        for i in range(6):
            for j in range(6):
                approx = brute_force_lagrange_deriv(nodes, j, nodes[i])
                assert abs(d[i, j] - approx) < 1e-5 * max(1.0, abs(approx))

    def test_constant_maps_to_zero(self):
        grid = colloc.build_grid(12, 0.0, 3.0)
        out = grid.diff_matrix @ np.full(12, 4.2)
        np.testing.assert_allclose(out, 0.0, atol=1e-9)

    def test_weight_rescaling_invariance(self):
        nodes = colloc.chebyshev_nodes(9)[::-1]
        w = colloc.barycentric_weights(nodes)
        d1 = colloc.differentiation_matrix(nodes, w)
        d2 = colloc.differentiation_matrix(nodes, 17.5 * w)
        np.testing.assert_allclose(d1, d2, atol=1e-12)

    @pytest.mark.parametrize("n", range(2, 33))
    def test_monomial_exactness(self, n):
        grid = colloc.build_grid(n, -1.0, 1.0)
        x = grid.nodes_time
        for p in range(n):
            deriv = grid.diff_matrix @ x**p
            exact = p * x ** (p - 1) if p > 0 else np.zeros(n)
            scale = max(1.0, np.abs(exact).max())
            assert np.abs(deriv - exact).max() <= 1e-7 * scale


class TestBuildGrid:
    def test_affine_map(self):
        grid = colloc.build_grid(3, 0.0, 2.0)
        np.testing.assert_allclose(grid.nodes_time, [0.0, 1.0, 2.0], atol=1e-15)

    def test_two_node_diff_matrix(self):
        grid = colloc.build_grid(2, 0.0, 1.0)
        np.testing.assert_allclose(grid.diff_matrix, [[-1.0, 1.0], [-1.0, 1.0]])

    def test_identity_interval(self):
        grid = colloc.build_grid(5, -1.0, 1.0)
        np.testing.assert_allclose(
            grid.nodes_time, colloc.chebyshev_nodes(5)[::-1], atol=1e-15
        )

    def test_endpoints_exact(self):
        grid = colloc.build_grid(21, 0.1, 0.3)
        assert grid.nodes_time[0] == 0.1
        assert grid.nodes_time[-1] == 0.3
        assert np.all(np.diff(grid.nodes_time) > 0)

    def test_affine_equivariance(self):
        t0, t_end = 2.0, 7.0
        ref = colloc.build_grid(16, -1.0, 1.0)
        mapped = colloc.build_grid(16, t0, t_end)
        np.testing.assert_allclose(
            mapped.diff_matrix,
            ref.diff_matrix * (2.0 / (t_end - t0)),
            rtol=1e-10,
        )

    def test_row_sums_up_to_64(self):
        for n in (2, 17, 64):
            grid = colloc.build_grid(n, 0.0, 5.0)
            assert np.abs(grid.diff_matrix.sum(axis=1)).max() <= 1e-9

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            colloc.build_grid(5, 1.0, 1.0)


class TestInterpEval:
    def test_node_coincidence_bitwise(self):
        grid = colloc.build_grid(7, 0.0, 4.0)
        coeffs = np.random.default_rng(0).standard_normal((7, 2))
        for k in range(7):
            value, extrapolated = colloc.interp_eval(grid, coeffs, grid.nodes_time[k])
            assert not extrapolated
            assert value[0] == coeffs[k, 0] and value[1] == coeffs[k, 1]

    def test_linear_midpoint(self):
        grid = colloc.build_grid(2, 0.0, 1.0)
        value, _ = colloc.interp_eval(grid, np.array([0.0, 1.0]), 0.5)
        np.testing.assert_allclose(value, [0.5])

    def test_quadratic_exact(self):
        grid = colloc.build_grid(3, -1.0, 1.0)
        value, _ = colloc.interp_eval(grid, np.array([1.0, 0.0, 1.0]), 0.5)
        np.testing.assert_allclose(value, [0.25], atol=1e-14)

    def test_extrapolation_flagged(self):
        grid = colloc.build_grid(4, 0.0, 1.0)
        coeffs = grid.nodes_time.copy()  # f(t) = t
        value, extrapolated = colloc.interp_eval(grid, coeffs, 1.5)
        assert extrapolated
        np.testing.assert_allclose(value, [1.5], atol=1e-10)

    def test_polynomial_reconstruction(self):
        grid = colloc.build_grid(9, 0.0, 2.0)
        coeffs = grid.nodes_time**5 - 2 * grid.nodes_time**2
        for t in np.linspace(0, 2, 23):
            value, _ = colloc.interp_eval(grid, coeffs, t)
            assert abs(value[0] - (t**5 - 2 * t**2)) < 1e-9
