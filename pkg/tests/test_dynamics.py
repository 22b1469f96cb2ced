import math

import numpy as np
import pytest

from pairspin import dynamics as dyn
from pairspin.dynamics import (MuInfEstimate, QuenchSpec, ReadoutParams,
                               Trace, cavity_output, classify_dynamical_phase,
                               collective_sums, derivative, effective_field,
                               extract_mu_inf, integrate, long_time_stats,
                               osc_frequency, run_quench, state_energy)
from pairspin.errors import NoPeakError, StepRejectedError
from pairspin.groundstate import ModelParams, solve_p, texture_from_solution
from pairspin.lattice import build_grid

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def grid():
    return build_grid(60, 4)


def p_params(grid, chi_p, chi_d=0.0, **kw):
    return ModelParams.from_ratios(chi_p, chi_d, 0.35, grid.n_sites, **kw)


def random_state(grid, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(grid.n_sites, 3))
    return 0.5 * v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------- fields

def test_field_all_down_is_kinetic_only(grid):
    params = p_params(grid, 3.0, 1.0)
    spins = np.tile([0.0, 0.0, -0.5], (grid.n_sites, 1))
    b, dp, dd = effective_field(spins, params, grid)
    assert dp == 0.0 and dd == 0.0
    assert np.allclose(b[:, :2], 0.0)
    assert np.allclose(b[:, 2], -params.j * grid.eta**2)


def test_field_reproduces_solver_order_parameter(grid):
    params = p_params(grid, 4.0)
    sol = solve_p(params, grid)
    tex = texture_from_solution(sol, params, grid)
    _, dp, dd = effective_field(tex, params, grid)
    assert abs(dp) == pytest.approx(sol.delta_p, rel=1e-12)
    assert abs(dd) < 1e-12


def test_field_single_tilted_site(grid):
    params = p_params(grid, 2.0)
    spins = np.tile([0.0, 0.0, -0.5], (grid.n_sites, 1))
    spins[7] = [0.5, 0.0, 0.0]
    _, dp, _ = effective_field(spins, params, grid)
    assert dp == pytest.approx(params.chi_p * grid.coupling_p[7] * 0.5)


def test_derivative_conserves_spin_length_with_loss(grid):
    # algebraic identity: the drift is orthogonal to the spin sitewise
    params = p_params(grid, 3.0, 2.0, loss_p=5e-3, loss_d=5e-3)
    for seed in range(3):
        s = random_state(grid, seed)
        ds = derivative(s, params, grid)
        assert np.max(np.abs(np.sum(s * ds, axis=1))) < 1e-14


def test_derivative_dark_state(grid):
    params = p_params(grid, 3.0, 2.0, loss_p=5e-3, loss_d=5e-3)
    spins = np.tile([0.0, 0.0, -0.5], (grid.n_sites, 1))
    assert np.max(np.abs(derivative(spins, params, grid))) == 0.0


def test_fast_path_matches_reference(grid):
    from pairspin import _fastpath
    if not _fastpath.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    params = p_params(grid, 3.0, 1.5, loss_p=2e-3, loss_d=1e-3)
    s0 = random_state(grid, 3)
    fast = integrate(s0, params, grid, t_final=2.0, dt=1e-3, stride=40)
    _fastpath.HAVE_NUMBA = False
    try:
        ref = integrate(s0, params, grid, t_final=2.0, dt=1e-3, stride=40)
    finally:
        _fastpath.HAVE_NUMBA = True
    assert np.max(np.abs(fast.delta_p - ref.delta_p)) < 1e-12
    assert np.max(np.abs(fast.energy - ref.energy)) < 1e-10


# ---------------------------------------------------------------- integration

def test_equilibrium_winding(grid):
    params = p_params(grid, 4.0)
    sol = solve_p(params, grid)
    tex = texture_from_solution(sol, params, grid)
    tr = integrate(tex, params, grid, t_final=2 * TWO_PI)
    amp = np.abs(tr.delta_p)
    assert np.ptp(amp) / amp[0] < 1e-10
    est = extract_mu_inf(tr)
    assert est.confident
    assert est.value == pytest.approx(sol.mu, abs=1e-6)
    # unwrapped phase is linear with slope -2*mu
    phase = np.unwrap(np.angle(tr.delta_p))
    fit = np.polyfit(tr.times, phase, 1)
    resid = phase - np.polyval(fit, tr.times)
    assert np.max(np.abs(resid)) < 1e-4


def test_conservation_hamiltonian(grid):
    params = p_params(grid, 3.0)
    s0 = random_state(grid, 1)
    tr = integrate(s0, params, grid, t_final=50 * TWO_PI)
    assert np.ptp(tr.energy) / abs(tr.energy[0]) < 1e-8
    assert np.ptp(tr.n_c) < 1e-8 * grid.n_sites


def test_norms_conserved_with_loss(grid):
    params = p_params(grid, 3.0, loss_p=2e-3)
    sol = solve_p(params, grid)
    tex = texture_from_solution(sol, params, grid, eps_d=1e-2)
    tr = integrate(tex, params, grid, t_final=10 * TWO_PI, keep_spins=True)
    norms = np.linalg.norm(tr.spins[-1], axis=1)
    assert np.max(np.abs(norms - 0.5)) < 1e-8
    # loss drains pairs: n_c is no longer constant
    assert np.ptp(tr.n_c) > 1e-6


def test_step_rejected_on_coarse_dt(grid):
    params = p_params(grid, 4.0)
    s0 = random_state(grid, 2)
    with pytest.raises(StepRejectedError):
        integrate(s0, params, grid, t_final=200.0, dt=1.5)


def test_integrate_rejects_bad_state(grid):
    params = p_params(grid, 1.0)
    with pytest.raises(ValueError):
        integrate(np.zeros((3, 3)), params, grid, t_final=1.0)
    with pytest.raises(ValueError):
        integrate(np.ones((grid.n_sites, 3)), params, grid, t_final=1.0)


def test_quench_phases_qualitative(grid):
    # strong-to-weak decays, modest quench settles, weak-to-strong oscillates
    t_final = 30 * TWO_PI
    tr1 = run_quench(grid, QuenchSpec(4.0, 1.0, t_final=t_final), 0.35)
    tr2 = run_quench(grid, QuenchSpec(2.0, 4.0, t_final=t_final), 0.35)
    tr3 = run_quench(grid, QuenchSpec(1.0, 3.0, t_final=t_final), 0.35)
    s1 = long_time_stats(tr1)
    s2 = long_time_stats(tr2)
    s3 = long_time_stats(tr3)
    d0_1 = abs(tr1.delta_p[0])
    assert s1["avg_p"] < 0.05 * d0_1
    assert s2["avg_p"] > 0.5 * abs(tr2.delta_p[0])
    assert s2["std_p"] < 0.05 * s2["avg_p"]
    assert s3["std_p"] > 0.05 * s3["avg_p"]


# ---------------------------------------------------------------- statistics

def synthetic_trace(times, dp, dd=None):
    dd = np.zeros_like(dp) if dd is None else dd
    return Trace(times=times, delta_p=dp, delta_d=dd,
                 n_c=np.zeros_like(times), energy=np.zeros_like(times))


def test_stats_constant_series():
    t = np.linspace(0.0, 10.0, 501)
    tr = synthetic_trace(t, np.full_like(t, 0.7, dtype=complex))
    s = long_time_stats(tr, window=(0.0, 10.0))
    assert s["avg_p"] == pytest.approx(0.7)
    assert s["std_p"] == pytest.approx(0.0, abs=1e-12)


def test_stats_sinusoid_analytic():
    t = np.linspace(0.0, 200.0, 20001)
    a, b, f = 1.3, 0.4, 0.35
    tr = synthetic_trace(t, (a + b * np.sin(TWO_PI * f * t)).astype(complex))
    s = long_time_stats(tr, window=(0.0, 200.0))
    assert s["avg_p"] == pytest.approx(a, rel=1e-3)
    assert s["std_p"] == pytest.approx(b / math.sqrt(2.0), rel=1e-2)


def test_extract_mu_inf_synthetic():
    t = np.linspace(0.0, 40.0, 4001)
    mu = 0.23
    tr = synthetic_trace(t, 0.8 * np.exp(-2j * mu * t))
    est = extract_mu_inf(tr, window=(0.0, 40.0))
    assert est.value == pytest.approx(mu, abs=1e-12)
    assert est.confident


def test_extract_mu_inf_flags_noisy_phase():
    rng = np.random.default_rng(5)
    t = np.linspace(0.0, 40.0, 2001)
    z = 0.8 * np.exp(-2j * (0.1 * t + 0.8 * np.sin(1.7 * t)))
    tr = synthetic_trace(t, z)
    est = extract_mu_inf(tr, window=(0.0, 40.0))
    assert not est.confident


def test_osc_frequency_synthetic():
    t = np.linspace(0.0, 100.0, 8001)
    f0 = 0.3137
    tr = synthetic_trace(t, (1.0 + 0.3 * np.cos(TWO_PI * f0 * t)).astype(complex))
    f = osc_frequency(tr, window=(0.0, 100.0))
    assert f == pytest.approx(f0, abs=1.0 / 100.0)


def test_osc_frequency_flat_raises():
    t = np.linspace(0.0, 100.0, 4001)
    tr = synthetic_trace(t, np.full_like(t, 0.9, dtype=complex))
    with pytest.raises(NoPeakError):
        osc_frequency(tr, window=(0.0, 100.0))


# ---------------------------------------------------------------- labels

def test_classify_synthetic_phase_i():
    t = np.linspace(0.0, 100.0, 4001)
    dp = (0.9 * np.exp(-0.3 * t)).astype(complex)
    lab = classify_dynamical_phase(synthetic_trace(t, dp))
    assert lab.label == "I"


def test_classify_synthetic_phase_ii_signs():
    t = np.linspace(0.0, 100.0, 4001)
    for mu, want in ((0.2, "II-BCS"), (-0.2, "II-BEC")):
        dp = 0.7 * np.exp(-2j * mu * t)
        lab = classify_dynamical_phase(synthetic_trace(t, dp))
        assert lab.label == want
        assert lab.mu_inf == pytest.approx(mu, abs=1e-9)


def test_classify_synthetic_phase_iii_family():
    t = np.linspace(0.0, 100.0, 4001)
    dp = (0.6 + 0.3 * np.cos(1.1 * t)) * np.exp(-0.2j * t)
    lab = classify_dynamical_phase(synthetic_trace(t, dp.astype(complex)))
    assert lab.label in ("III", "III*")
    assert lab.sub_label_method == "std-threshold"


def test_classify_equilibrium_is_phase_ii(grid):
    params = p_params(grid, 4.0)
    sol = solve_p(params, grid)
    tex = texture_from_solution(sol, params, grid)
    tr = integrate(tex, params, grid, t_final=4 * TWO_PI)
    lab = classify_dynamical_phase(tr)
    assert lab.label == "II-BCS"
    assert lab.mu_inf == pytest.approx(sol.mu, abs=1e-6)


# ---------------------------------------------------------------- readout

def test_cavity_output_single_tone(grid):
    params = p_params(grid, 4.0)
    t = np.linspace(0.0, 10.0, 1001)
    tr = synthetic_trace(t, np.full_like(t, 0.5, dtype=complex))
    ro = ReadoutParams(gain_p=0.1 + 0.0j, gain_d=0.2 + 0.0j,
                       delta_ca=-500.0, delta_cb=-900.0, kappa=1.0)
    alpha, n_p, n_d = cavity_output(tr, ro, params, grid.n_sites)
    # chi_d = 0: pure single tone at delta_ca
    assert np.allclose(np.abs(alpha), 5.0)
    spec = np.fft.fft(alpha)
    freqs = np.fft.fftfreq(t.size, t[1] - t[0]) * TWO_PI
    peak = freqs[np.argmax(np.abs(spec))]
    assert peak == pytest.approx(-500.0, abs=TWO_PI / 10.0)
    assert np.all(n_d == 0.0)


def test_cavity_output_zero_state(grid):
    params = p_params(grid, 4.0, 3.0)
    t = np.linspace(0.0, 5.0, 101)
    tr = synthetic_trace(t, np.zeros_like(t, dtype=complex))
    ro = ReadoutParams(gain_p=0.1, gain_d=0.1, delta_ca=-500.0,
                       delta_cb=-900.0, kappa=1.0)
    alpha, n_p, n_d = cavity_output(tr, ro, params, grid.n_sites)
    assert np.all(alpha == 0.0) and np.all(n_p == 0.0)


def test_cavity_photons_small_compared_to_atoms():
    # kappa/|delta_cA| = 2e-3 and steady pairing leak few photons per period
    g = build_grid(60, 4)
    params = ModelParams.from_ratios(4.0, 0.0, 0.35, g.n_sites)
    sol = solve_p(params, g)
    tex = texture_from_solution(sol, params, g)
    tr = integrate(tex, params, g, t_final=TWO_PI / (4.0 * g.n_sites / TWO_PI))
    # readout gain for |G| = chi*N * sqrt(|delta|/kappa) scaling: use the
    # physical relation n ~ 2 pi xi N (kappa/|d|) |Delta/(chi N)|^2
    kappa_over_delta = 2e-3
    chi_n = params.chi_p * g.n_sites
    xi = chi_n * (tr.times[-1] - tr.times[0]) / TWO_PI
    n_est = (TWO_PI * xi * g.n_sites * kappa_over_delta
             * abs(sol.delta_p / chi_n) ** 2)
    assert n_est < 0.1 * g.n_sites


# ---------------------------------------------------------------- misc

def test_state_energy_matches_field_form(grid):
    params = p_params(grid, 2.5, 1.5)
    s = random_state(grid, 4)
    ell_p, ell_d = collective_sums(s, grid)
    manual = (2.0 * params.j * float(grid.eta**2 @ s[:, 2])
              - params.chi_p * abs(ell_p) ** 2
              - params.chi_d * abs(ell_d) ** 2)
    assert state_energy(s, params, grid) == pytest.approx(manual, rel=1e-14)


def test_quench_spec_validation():
    with pytest.raises(ValueError):
        QuenchSpec(1.0, 2.0, t_final=-1.0)
    with pytest.raises(ValueError):
        QuenchSpec(1.0, 2.0, dt=0.0)
