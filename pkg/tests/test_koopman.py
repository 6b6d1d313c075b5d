import numpy as np
import pytest

from rkhskit.errors import ConfigError, InputError
from rkhskit.kernels import Gaussian, Linear
from rkhskit.koopman import (
    Trajectory,
    fit_koopman,
    forecast_observable,
    forecast_state,
    koopman_modes,
    koopman_weights,
    reduced_matrix,
)
from rkhskit.oracles import FiniteMarkovChain, LinearSystem, simulate_chain, simulate_linear_system


def geometric(T, ratio=0.5, x0=1.0):
    return Trajectory((x0 * ratio ** np.arange(T + 1))[:, None])


class TestTrajectory:
    def test_pairs(self):
        tr = Trajectory([[0.0], [1.0], [2.0]])
        X, Y = tr.pairs()
        np.testing.assert_array_equal(X[:, 0], [0, 1])
        np.testing.assert_array_equal(Y[:, 0], [1, 2])
        assert tr.n_pairs == 2

    def test_too_short(self):
        with pytest.raises(InputError):
            Trajectory([[1.0, 2.0]])

    def test_pooling(self):
        a, b = geometric(3), geometric(2, 0.9, 2.0)
        pooled = Trajectory.concatenate([a, b])
        assert pooled.n_pairs == 5
        X, Y = pooled.pairs()
        np.testing.assert_array_equal(Y[3:], b.pairs()[1])


class TestFit:
    def test_single_pair(self):
        m = fit_koopman(Trajectory([[0.2], [0.4]]), Gaussian(1.0), 1.0)
        np.testing.assert_array_equal(m.gram_factor.matrix, [[2.0]])

    def test_constant_trajectory_warns(self):
        m = fit_koopman(Trajectory(np.ones((6, 2))), Gaussian(1.0), 0.1)
        assert np.linalg.matrix_rank(m.K_X) == 1
        assert any("identical" in w for w in m.warnings)
        assert m.gram_factor.jitter == 0.0

    def test_geometric_gram(self):
        m = fit_koopman(geometric(3), Linear(), 0.1)
        v = np.array([1.0, 0.5, 0.25])
        np.testing.assert_array_equal(m.K_X, np.outer(v, v))
        np.testing.assert_array_equal(m.outputs[:-1], m.inputs[1:])

    def test_bad_lambda(self):
        with pytest.raises(ConfigError):
            fit_koopman(geometric(3), Linear(), 0.0)


class TestWeights:
    def test_single_snapshot(self):
        m = fit_koopman(Trajectory([[0.2], [0.4]]), Gaussian(1.0), 1.0)
        assert koopman_weights(m, [0.2])[0] == pytest.approx(0.5, rel=1e-15)

    def test_far_query(self):
        m = fit_koopman(geometric(4), Gaussian(1.0), 0.1)
        assert np.all(koopman_weights(m, [1e3]) == 0)

    def test_two_by_two(self):
        lam = 0.05
        m = fit_koopman(geometric(2), Linear(), lam)
        a, b, c = 1 + 2 * lam, 0.5, 0.25 + 2 * lam
        det = a * c - b * b
        expected = np.array([(c * 1 - b * 0.5) / det, (a * 0.5 - b * 1) / det])
        np.testing.assert_allclose(koopman_weights(m, [1.0]), expected, rtol=1e-13)

    def test_batch_matches_single(self):
        m = fit_koopman(geometric(5), Gaussian(1.0), 0.01)
        q = np.array([[0.1], [0.7]])
        np.testing.assert_allclose(koopman_weights(m, q)[1], koopman_weights(m, q[1]), rtol=1e-14)

    def test_dimension_mismatch(self):
        m = fit_koopman(geometric(3), Linear(), 0.1)
        with pytest.raises(InputError):
            koopman_weights(m, [1.0, 2.0])


class TestForecast:
    def test_zero_observable(self):
        m = fit_koopman(geometric(5), Gaussian(1.0), 0.1)
        assert forecast_observable(m, np.zeros(5), [0.3]) == 0.0

    def test_constant_observable(self):
        m = fit_koopman(geometric(5), Gaussian(1.0), 0.1)
        s = koopman_weights(m, [0.3]).sum()
        assert forecast_observable(m, np.ones(5), [0.3]) == pytest.approx(s, rel=1e-14)

    def test_linear_contraction(self):
        m = fit_koopman(geometric(10), Linear(), 1e-10)
        f = m.outputs[:, 0]
        for x in (1.0, -0.3, 2.5):
            assert forecast_observable(m, f, [x]) == pytest.approx(0.5 * x, rel=1e-6)

    def test_length_mismatch(self):
        m = fit_koopman(geometric(5), Linear(), 0.1)
        with pytest.raises(InputError):
            forecast_observable(m, np.ones(4), [1.0])

    def test_state_forecast(self):
        m = fit_koopman(geometric(10), Linear(), 1e-10)
        out = forecast_state(m, [0.8], 3)
        np.testing.assert_allclose(out[:, 0], [0.4, 0.2, 0.1], rtol=1e-6)

    def test_state_at_snapshot(self):
        sys = LinearSystem(np.array([[0.8, 0.1], [-0.1, 0.7]]))
        tr = simulate_linear_system(sys, [1.0, -0.5], 20)
        m = fit_koopman(tr, Gaussian(1.0), 1e-10)
        X, Y = tr.pairs()
        for t in (0, 5, 13):
            np.testing.assert_allclose(forecast_state(m, X[t], 1)[0], Y[t], atol=1e-4)

    def test_steps_validation(self):
        m = fit_koopman(geometric(3), Linear(), 0.1)
        with pytest.raises(InputError):
            forecast_state(m, [1.0], 0)

    def test_contraction_bound(self):
        rng = np.random.default_rng(0)
        tr = Trajectory(rng.normal(size=(31, 2)))
        lam = 0.01
        m = fit_koopman(tr, Gaussian(1.0), lam)
        T = m.n_pairs
        for _ in range(20):
            x = rng.normal(size=2) * 2
            f = rng.normal(size=T)
            alpha = koopman_weights(m, x)
            assert np.linalg.norm(alpha) <= np.sqrt(T) / (T * lam)
            assert abs(forecast_observable(m, f, x)) <= np.linalg.norm(f) * np.linalg.norm(alpha) + 1e-12


class TestModes:
    def test_identity_dynamics(self):
        m = fit_koopman(Trajectory(np.tile([1.0, 2.0], (8, 1))), Linear(), 1e-10)
        assert koopman_modes(m, 1).eigenvalues[0] == pytest.approx(1.0, abs=1e-6)

    def test_diagonal_system(self):
        tr = simulate_linear_system(LinearSystem(np.diag([0.9, 0.5])), [1.0, 1.0], 12)
        modes = koopman_modes(fit_koopman(tr, Linear(), 1e-8), 2)
        np.testing.assert_allclose(np.sort(modes.moduli), [0.5, 0.9], atol=1e-3)

    def test_large_lambda_shrinks(self):
        tr = simulate_linear_system(LinearSystem(np.diag([0.9, 0.5])), [1.0, 1.0], 12)
        modes = koopman_modes(fit_koopman(tr, Linear(), 1e6), 12)
        assert modes.moduli.max() < 0.01
        assert modes.r == 12

    def test_sorted_and_residuals(self):
        rng = np.random.default_rng(1)
        rot = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]]) * 0.95
        tr = simulate_linear_system(LinearSystem(rot, 0.05, seed=2), [1.0, 0.0], 60)
        m = fit_koopman(tr, Gaussian(0.5), 1e-4)
        modes = koopman_modes(m, 20)
        assert np.all(np.diff(modes.moduli) <= 1e-12)
        C = reduced_matrix(m)
        for mu, v in zip(modes.eigenvalues, modes.eigenvectors.T):
            assert np.linalg.norm(C @ v - mu * v) <= 1e-6 * np.linalg.norm(v) * max(1, np.linalg.norm(C))
        # conjugate pairs are reported together
        cplx = modes.eigenvalues[np.abs(modes.eigenvalues.imag) > 1e-12]
        for mu in cplx:
            assert np.any(np.isclose(cplx, np.conj(mu), rtol=0, atol=1e-12))
        del rng

    def test_rotation_recovers_complex_pair(self):
        rot = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]]) * 0.95
        tr = simulate_linear_system(LinearSystem(rot), [1.0, 0.0], 40)
        modes = koopman_modes(fit_koopman(tr, Linear(), 1e-10), 2)
        np.testing.assert_allclose(modes.eigenvalues, [0.95 * np.exp(0.3j), 0.95 * np.exp(-0.3j)], atol=1e-5)

    def test_coefficients_define_eigenfunctions(self):
        # forecasting g = sum_t u_t k(x_t, .) gives mu g at arbitrary points
        tr = simulate_linear_system(LinearSystem(np.diag([0.9, 0.5]), 0.05, seed=3), [1.0, 1.0], 40)
        m = fit_koopman(tr, Gaussian(1.0), 1e-3)
        modes = koopman_modes(m, 3)
        from rkhskit.kernels import cross_gram
        q = np.random.default_rng(0).normal(size=(5, 2))
        for mu, u in zip(modes.eigenvalues, modes.eigvec_coeffs.T):
            g_out = cross_gram(m.kernel, m.outputs, m.inputs) @ u  # g(x_{t+1})
            Wg = koopman_weights(m, q) @ g_out
            g_q = cross_gram(m.kernel, q, m.inputs) @ u
            np.testing.assert_allclose(Wg, mu * g_q, atol=1e-8 * max(1, np.abs(g_q).max()))

    def test_r_validation(self):
        m = fit_koopman(geometric(4), Linear(), 0.1)
        with pytest.raises(InputError):
            koopman_modes(m, 5)
        with pytest.raises(InputError):
            koopman_modes(m, 0)

    def test_shrinkage_monotone(self):
        tr = simulate_linear_system(LinearSystem(np.diag([0.9, 0.5]), 0.1, seed=0), [1.0, 1.0], 80)
        radii = [np.abs(np.linalg.eigvals(reduced_matrix(fit_koopman(tr, Gaussian(1.0), lam)))).max()
                 for lam in (1e-6, 1e-3, 1.0)]
        assert radii[0] >= radii[1] >= radii[2]

    def test_arpack_path_matches_dense(self, monkeypatch):
        import rkhskit.koopman as kmod
        tr = simulate_linear_system(LinearSystem(np.diag([0.9, 0.5]), 0.05, seed=4), [1.0, 1.0], 300)
        m = fit_koopman(tr, Gaussian(1.0), 1e-3)
        ref = koopman_modes(m, 3)
        monkeypatch.setattr(kmod, "DENSE_EIG_LIMIT", 10)
        sparse = koopman_modes(m, 3)
        np.testing.assert_allclose(sparse.eigenvalues, ref.eigenvalues, atol=1e-8)
        # coefficient vectors agree up to a unit-modulus phase
        for a, b in zip(sparse.eigvec_coeffs.T, ref.eigvec_coeffs.T):
            assert abs(abs(np.vdot(a, b)) - 1.0) < 1e-8

    def test_reversible_chain_real_spectrum(self):
        w = np.array([[2.0, 1.0, 0.5], [1.0, 1.0, 2.0], [0.5, 2.0, 3.0]])
        chain = FiniteMarkovChain(w / w.sum(axis=1, keepdims=True))
        tr = simulate_chain(chain, 5000, seed=1)
        modes = koopman_modes(fit_koopman(tr, Linear(), 1e-4), 3)
        assert np.all(np.abs(modes.eigenvalues.imag) <= 1e-2)
