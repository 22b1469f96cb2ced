import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pairspin.lattice import (build_grid, eta_weights, level_grid,
                              momentum_grid, site_weight_sums,
                              uniform_level_grid)


def test_build_grid_4x1_quarter_angles():
    g = build_grid(4, 1)
    assert np.allclose(g.theta_x, [0.0, np.pi / 2, np.pi, 3 * np.pi / 2])
    assert np.allclose(g.eta, [1.0, 0.0, 1.0, 0.0], atol=1e-15)
    # cos(pi) = -1 folds as a pi phase shift
    assert np.isclose(g.phi[2], np.pi)
    assert np.isclose(g.phi[0], 0.0)


def test_build_grid_2x1_sign_folding():
    g = build_grid(2, 1)
    assert np.allclose(g.eta, [1.0, 1.0])
    assert np.allclose(g.phi, [0.0, np.pi])


def test_build_grid_rejects_degenerate_x():
    with pytest.raises(ValueError):
        build_grid(1, 5)


def test_coupling_law_reconstruction():
    # eta*exp(i*phi) must equal cos(theta_x)*exp(-i*psi_y) sitewise
    g = build_grid(17, 6)
    rebuilt = g.coupling_p
    for j in range(g.n_x):
        for l in range(g.n_y):
            want = np.cos(g.theta_x[j]) * np.exp(-1j * g.psi_y[l])
            assert np.isclose(rebuilt[j * g.n_y + l], want, atol=1e-12)


def test_moment_sums_500x20():
    g = build_grid(500, 20)
    s1, s2, s4 = site_weight_sums(g)
    n = g.n_sites
    # discrete cosine-moment identity: mean of cos^2 is exactly 1/2
    assert abs(s2 / n - 0.5) < 1e-12
    # continuum means of |cos| and cos^4 over uniform angles
    mean_abs = integrate.quad(lambda t: abs(np.cos(t)), 0, 2 * np.pi)[0] / (2 * np.pi)
    mean_4 = integrate.quad(lambda t: np.cos(t) ** 4, 0, 2 * np.pi)[0] / (2 * np.pi)
    assert abs(mean_abs - 2 / np.pi) < 1e-9
    assert abs(s1 / n - mean_abs) < 1e-2 / 500
    assert abs(s4 / n - mean_4) < 1e-12


def test_moment_sums_4x1():
    g = build_grid(4, 1)
    assert site_weight_sums(g) == (2.0, 2.0, 2.0)


def test_momentum_grid_4x1_levels():
    mg = momentum_grid(build_grid(4, 1))
    assert np.allclose(mg.k_levels, [0.0, 1.0], atol=1e-15)
    assert np.allclose(mg.weights, [2.0, 2.0])


def test_momentum_grid_2x1_single_level():
    mg = momentum_grid(build_grid(2, 1))
    assert np.allclose(mg.k_levels, [1.0])
    assert np.allclose(mg.weights, [2.0])


def test_momentum_grid_500x20():
    g = build_grid(500, 20)
    mg = momentum_grid(g)
    # |cos(2*pi*j/500)| over j=0..499 takes j=0..125 as distinct values
    distinct = len({round(abs(np.cos(2 * np.pi * j / 500)), 12) for j in range(500)})
    assert mg.k_levels.size == distinct == 126
    assert mg.weights.sum() == g.n_sites
    assert np.all(np.diff(mg.k_levels) > 0)
    assert mg.phi_ring.size == 20
    assert mg.complete
    # bijection: every site indexed exactly once
    counted = sum(len(v) for v in mg.sites.values())
    assert counted == g.n_sites


def test_momentum_grid_partial_cells_on_odd_ring():
    # odd n_y splits the ring between folded and unfolded phases
    mg = momentum_grid(build_grid(3, 3))
    assert not mg.complete
    assert sum(len(v) for v in mg.sites.values()) == 9


def test_uniform_level_grid():
    lg = uniform_level_grid(30)
    assert lg.eta.size == 30
    assert np.all(np.diff(lg.eta) > 0)
    assert 0.0 < lg.eta[0] and lg.eta[-1] < 1.0
    # midpoint sampling keeps the cos^2 moment at 1/2
    assert abs(np.mean(lg.eta**2) - 0.5) < 1e-12


@settings(max_examples=40, deadline=None)
@given(n_x=st.integers(min_value=2, max_value=60),
       n_y=st.integers(min_value=1, max_value=12))
def test_grid_invariants(n_x, n_y):
    g = build_grid(n_x, n_y)
    assert np.all(g.eta >= 0.0) and np.all(g.eta <= 1.0)
    assert np.all(g.phi >= 0.0) and np.all(g.phi < 2 * np.pi)
    mg = momentum_grid(g)
    assert mg.weights.sum() == pytest.approx(g.n_sites)
    assert np.all(np.diff(mg.k_levels) > 0)
    eta, w = eta_weights(level_grid(g))
    assert float(w @ eta**2) == pytest.approx(float(np.sum(g.eta**2)))


def test_moment_convergence_rate():
    # moment sums approach (2/pi, 1/2, 3/8)*N with O(1/n_x) error
    errs = []
    for n_x in (40, 80, 160):
        g = build_grid(n_x, 1)
        s1, _, _ = site_weight_sums(g)
        errs.append(abs(s1 / g.n_sites - 2 / np.pi))
    assert errs[2] < errs[0]
    assert errs[2] < 10.0 / 160
