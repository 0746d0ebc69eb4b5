import math

import numpy as np
import pytest

import feller


def test_scalar_ou():
    m = feller.OUModel.scalar(-1.0, 1.0)
    assert feller.flow(m, 1.0)[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert feller.gramian(m, 1.0)[0, 0] == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-12)
    assert feller.sf_norm(m, 1.0) == pytest.approx(0.559495563431321, rel=1e-12)
    assert feller.stationary_covariance(m)[0, 0] == pytest.approx(0.5)


def test_kalman_and_scaling():
    chain = feller.OUModel(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
    assert feller.kalman_index(chain) == 1
    fit = feller.sf_scaling_fit(chain, np.logspace(-4, -1, 12))
    assert abs(fit.slope + 1.5) < 0.1


def test_errors_are_translated():
    bad = feller.OUModel(np.zeros((2, 2)), np.array([[1.0], [0.0]]))
    with pytest.raises(feller.FellerError):
        feller.kalman_index(bad)


def test_perturbed_semigroup():
    m = feller.OUModel.scalar(-1.0, 1.0)
    drift = feller.DriftField.constant(np.array([1.0]))
    choice = feller.choose_t0(m, drift)
    assert choice.t0 == 0.0625
    grid = feller.build_grid([-8.0], [8.0], [64])
    ps = feller.solve_perturbed(m, drift, grid, choice.t0)
    assert ps.report.rho < 1.0
    x = grid.nodes[0]
    t = 4 * choice.t0
    out = ps.apply(t, x)
    core = np.abs(x) <= 2.0
    exact = math.exp(-t) * x + 1 - math.exp(-t)
    assert np.max(np.abs(out[core] - exact[core])) < 2e-2
    assert ps.leak(t).shape == (64,)


def test_monte_carlo():
    m = feller.OUModel.scalar(-1.0, 1.0)
    est = feller.mc_transition(
        m, feller.DriftField.zero(1), np.array([2.0]), 1.0, lambda z: z[0],
        dt=0.01, n_paths=5000, seed=3)
    assert abs(est.mean - 2 * math.exp(-1)) < 4 * est.std_error


def test_heat():
    model = feller.SpectralHeatModel(32)
    h = feller.hyp_check(model, 1.0)
    assert h.i1 == pytest.approx(0.7070834975723057, rel=1e-10)
    assert feller.heat_invariant(model)[0] == pytest.approx(1 / (2 * math.pi**2), rel=1e-13)
