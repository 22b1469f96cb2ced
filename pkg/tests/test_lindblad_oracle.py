import math

import numpy as np
import pytest

from pairspin.dynamics import integrate
from pairspin.errors import SizeExceededError
from pairspin.groundstate import ModelParams
from pairspin.lattice import build_grid
from pairspin.lindblad import exact_lindblad_oracle, product_state

TWO_PI = 2.0 * math.pi


def tilted_state(grid, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(grid.n_sites, 3)) + [0.3, 0.0, 0.4]
    return 0.5 * v / np.linalg.norm(v, axis=1, keepdims=True)


def test_size_limit():
    g = build_grid(5, 1)
    p = ModelParams.from_ratios(1.0, 0.0, 0.35, g.n_sites)
    with pytest.raises(SizeExceededError):
        exact_lindblad_oracle(tilted_state(g), p, g, t_final=0.1)


def test_product_state_is_valid_density_matrix():
    g = build_grid(2, 1)
    rho = product_state(tilted_state(g))
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)
    assert np.min(np.linalg.eigvalsh(rho)) > -1e-12


def test_all_down_stationary_both_routes():
    g = build_grid(2, 1)
    p = ModelParams.from_ratios(2.0, 1.0, 0.35, g.n_sites,
                                loss_p=1e-2, loss_d=1e-2)
    down = np.tile([0.0, 0.0, -0.5], (g.n_sites, 1))
    ex = exact_lindblad_oracle(down, p, g, t_final=2.0)
    mf = integrate(down, p, g, t_final=2.0, dt=1e-3)
    assert np.max(np.abs(ex.spins - ex.spins[0])) < 1e-10
    assert abs(mf.delta_p[-1]) < 1e-14 and abs(mf.delta_d[-1]) < 1e-14


def test_noninteracting_precession_exact():
    # no exchange: each spin Larmor-precesses about its kinetic field, with
    # the closed form S^+(t) = S^+(0) exp(2 i j eta^2 t)
    g = build_grid(2, 1)
    p = ModelParams(chi_p=0.0, chi_d=0.0, n_c_frac=0.35)
    s0 = np.array([[0.4, 0.1, 0.0], [0.1, -0.2, 0.3]])
    s0 = 0.5 * s0 / np.linalg.norm(s0, axis=1, keepdims=True)
    ex = exact_lindblad_oracle(s0, p, g, t_final=3.0, dt=5e-4, stride=200)
    mf = integrate(s0, p, g, t_final=3.0, dt=5e-4, stride=200,
                   keep_spins=True)
    for t, spins in zip(ex.times, ex.spins):
        want = (s0[:, 0] + 1j * s0[:, 1]) * np.exp(2j * p.j * g.eta**2 * t)
        got = spins[:, 0] + 1j * spins[:, 1]
        assert np.max(np.abs(got - want)) < 1e-8
    assert np.max(np.abs(mf.spins[-1] - ex.spins[-1])) < 1e-8


@pytest.mark.parametrize("loss", [0.0, 2e-2])
def test_two_site_short_time_exponent(loss):
    # mean-field factorization error grows at second order in time when the
    # site self-terms are treated exactly on both sides
    g = build_grid(2, 1)
    p = ModelParams.from_ratios(1.2, 0.8, 0.35, g.n_sites,
                                loss_p=loss, loss_d=loss)
    s0 = tilted_state(g, seed=3)
    horizons = np.array([0.05, 0.1, 0.2, 0.4, 0.8])
    resid = []
    for t_f in horizons:
        ex = exact_lindblad_oracle(s0, p, g, t_final=t_f, dt=t_f / 400,
                                   stride=10**9)
        mf = integrate(s0, p, g, t_final=t_f, dt=t_f / 400, stride=10**9,
                       keep_spins=True, exclude_self=True)
        resid.append(np.max(np.abs(ex.spins[-1] - mf.spins[-1])))
    slope = np.polyfit(np.log(horizons), np.log(resid), 1)[0]
    assert slope >= 1.9


def test_two_site_self_term_matters():
    # with the naive all-site factorization the derivatives already differ
    # at t=0, so the residual is first order in time
    g = build_grid(2, 1)
    p = ModelParams.from_ratios(1.2, 0.0, 0.35, g.n_sites)
    s0 = tilted_state(g, seed=3)
    horizons = np.array([0.05, 0.1, 0.2, 0.4])
    resid = []
    for t_f in horizons:
        ex = exact_lindblad_oracle(s0, p, g, t_final=t_f, dt=t_f / 400,
                                   stride=10**9)
        mf = integrate(s0, p, g, t_final=t_f, dt=t_f / 400, stride=10**9,
                       keep_spins=True, exclude_self=False)
        resid.append(np.max(np.abs(ex.spins[-1] - mf.spins[-1])))
    slope = np.polyfit(np.log(horizons), np.log(resid), 1)[0]
    assert slope < 1.5
