"""Mean-field Bloch dynamics of the pairing model and trace diagnostics.

Spins precess as ``ds/dt = 2 s x B`` under the collective field

    B^x - i B^y = eta e^{-i phi} Delta_p + eta^2 e^{-2i phi} Delta_d,
    B^z         = -j eta^2,

with the order parameters recomputed from the instantaneous state before
each integrator stage.  The sign convention is fixed by the equilibrium
winding ``Delta(t) = Delta_0 exp(-2 i mu t)``.  Cavity photon loss enters
as a factorized collective drift that conserves each spin length exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fastpath
from .errors import NoPeakError, StepRejectedError
from .groundstate import ModelParams, ground_branch, texture_from_solution
from .lattice import LatticeGrid

SPIN_NORM_TOL = 1e-6


@dataclass(frozen=True)
class QuenchSpec:
    """Preparation and evolution couplings (dimensionless chi*N/j) plus
    integration horizon.  ``eps_d``/``eps_p`` seed the competing channel in
    the prepared texture."""

    chi_p_i: float
    chi_p_f: float
    chi_d_i: float = 0.0
    chi_d_f: float = 0.0
    eps_d: float = 0.0
    eps_p: float = 0.0
    t_final: float = 50.0 * 2.0 * math.pi
    dt: float | None = None

    def __post_init__(self):
        if self.t_final <= 0.0:
            raise ValueError("t_final must be positive")
        if self.dt is not None and self.dt <= 0.0:
            raise ValueError("dt must be positive")


@dataclass
class Trace:
    """Recorded time series of a single run (frequency units of j)."""

    times: np.ndarray
    delta_p: np.ndarray
    delta_d: np.ndarray
    n_c: np.ndarray
    energy: np.ndarray
    spins: np.ndarray | None = None
    spin_times: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        return (self.times >= t_lo) & (self.times <= t_hi)

    def default_window(self) -> np.ndarray:
        return self.window(0.5 * self.times[-1], self.times[-1])


def default_dt(params: ModelParams, n_sites: int) -> float:
    """Fixed step resolving the fastest collective scale."""
    scale = max(params.j, params.chi_p * n_sites, params.chi_d * n_sites)
    return 2.0 * math.pi / (200.0 * scale)


def collective_sums(spins: np.ndarray, grid: LatticeGrid):
    """Raw channel sums ``sum_n c_n <S^-_n>`` (order parameter / coupling)."""
    sminus = spins[:, 0] - 1j * spins[:, 1]
    return grid.coupling_p @ sminus, grid.coupling_d @ sminus


def effective_field(spins: np.ndarray, params: ModelParams,
                    grid: LatticeGrid):
    """Self-consistent field of a state: (B, delta_p, delta_d).

    Evaluated without a chemical potential (the simulated Hamiltonian does
    not contain one); B has shape (N, 3).
    """
    ell_p, ell_d = collective_sums(spins, grid)
    delta_p = params.chi_p * ell_p
    delta_d = params.chi_d * ell_d
    w = np.conj(grid.coupling_p) * delta_p + np.conj(grid.coupling_d) * delta_d
    b = np.empty_like(spins)
    b[:, 0] = w.real
    b[:, 1] = -w.imag
    b[:, 2] = -params.j * grid.eta**2
    return b, complex(delta_p), complex(delta_d)


def derivative(spins: np.ndarray, params: ModelParams, grid: LatticeGrid,
               exclude_self: bool = False) -> np.ndarray:
    """Time derivative of the spin state: precession plus loss drift.

    ``exclude_self`` switches to the small-N bookkeeping where each site's
    own contribution to the collective field is treated exactly (operator
    identity ``S^+S^- = 1/2 + S^z``) instead of factorized; production runs
    keep the standard all-site field, whose difference is O(1/N).
    """
    return _derivative(spins, params, grid, exclude_self)[0]


def _derivative(spins, params, grid, exclude_self=False):
    cp = grid.coupling_p
    cd = grid.coupling_d
    eta2 = grid.eta**2
    sx, sy, sz = spins[:, 0], spins[:, 1], spins[:, 2]
    sminus = sx - 1j * sy
    ell_p = cp @ sminus
    ell_d = cd @ sminus

    wp = ell_p if not exclude_self else ell_p - cp * sminus
    wd = ell_d if not exclude_self else ell_d - cd * sminus
    w = params.chi_p * np.conj(cp) * wp + params.chi_d * np.conj(cd) * wd
    bx = w.real
    by = -w.imag
    bz = -params.j * eta2
    if exclude_self:
        # exact self-term of the exchange energy is a z-field shift
        bz = bz + 0.5 * (params.chi_p * eta2 + params.chi_d * eta2**2)

    ds = np.empty_like(spins)
    ds[:, 0] = 2.0 * (sy * bz - sz * by)
    ds[:, 1] = 2.0 * (sz * bx - sx * bz)
    ds[:, 2] = 2.0 * (sx * by - sy * bx)

    if params.gamma_p > 0.0 or params.gamma_d > 0.0:
        splus = np.conj(sminus)
        dplus = np.zeros_like(sminus)
        dz = np.zeros_like(sz)
        for gamma, c, ell in ((params.gamma_p, cp, ell_p),
                              (params.gamma_d, cd, ell_d)):
            if gamma <= 0.0:
                continue
            ell_n = ell - c * sminus if exclude_self else ell
            dplus += gamma * c * sz * np.conj(ell_n)
            dz -= gamma * np.real(np.conj(c) * splus * ell_n)
            if exclude_self:
                # exact single-site decay from the jump operator's own site
                rate = gamma * np.abs(c) ** 2
                dplus -= 0.5 * rate * splus
                dz -= rate * (0.5 + sz)
        ds[:, 0] += dplus.real
        ds[:, 1] += dplus.imag
        ds[:, 2] += dz
    return ds, params.chi_p * ell_p, params.chi_d * ell_d


def state_energy(spins: np.ndarray, params: ModelParams,
                 grid: LatticeGrid) -> float:
    """Mean-field energy of a state under the simulated Hamiltonian."""
    ell_p, ell_d = collective_sums(spins, grid)
    kin = 2.0 * params.j * float(grid.eta**2 @ spins[:, 2])
    return (kin - params.chi_p * abs(ell_p) ** 2
            - params.chi_d * abs(ell_d) ** 2)


def integrate(spins0: np.ndarray, params: ModelParams, grid: LatticeGrid,
              t_final: float, dt: float | None = None, stride: int = 10,
              keep_spins: bool = False, exclude_self: bool = False) -> Trace:
    """Fixed-step RK4 trace with per-stage global reductions.

    Records every ``stride`` steps (and the endpoint).  Raises
    StepRejectedError if any spin norm drifts beyond tolerance, which means
    the step is too large for the coupling scales at play.
    """
    n = grid.n_sites
    if spins0.shape != (n, 3):
        raise ValueError(f"state shape {spins0.shape} does not match grid ({n}, 3)")
    norms0 = np.linalg.norm(spins0, axis=1)
    if np.max(np.abs(norms0 - 0.5)) > SPIN_NORM_TOL:
        raise ValueError("initial spins must have length 1/2")
    if dt is None:
        dt = default_dt(params, n)
    n_steps = max(1, int(math.ceil(t_final / dt - 1e-12)))

    s = spins0.copy()
    times, dps, dds, ncs, ens = [], [], [], [], []
    snaps, snap_times = [], []

    def record(t, s):
        _, dp, dd = _derivative(s, params, grid, exclude_self)
        times.append(t)
        dps.append(dp)
        dds.append(dd)
        ncs.append(float(np.sum(s[:, 2])) + 0.5 * n)
        ens.append(state_energy(s, params, grid))
        if keep_spins:
            snaps.append(s.copy())
            snap_times.append(t)
        if not exclude_self:
            # exact-self mode lets single-site decay shrink the vectors;
            # the factorized drift must keep them at 1/2
            drift = np.max(np.abs(np.linalg.norm(s, axis=1) - 0.5))
            if drift > SPIN_NORM_TOL:
                raise StepRejectedError(
                    f"spin norm drift {drift:.2e} at t={t:.4g}; reduce dt")

    use_fast = _fastpath.HAVE_NUMBA and not exclude_self
    if use_fast:
        splus = np.ascontiguousarray(s[:, 0] + 1j * s[:, 1])
        sz = np.ascontiguousarray(s[:, 2])
        cp = np.ascontiguousarray(grid.coupling_p)
        cd = np.ascontiguousarray(grid.coupling_d)
        bz = np.ascontiguousarray(-params.j * grid.eta**2)

    record(0.0, s)
    k = 0
    while k < n_steps:
        chunk = min(stride - (k % stride) if k % stride else stride,
                    n_steps - k)
        if use_fast:
            _fastpath.rk4_chunk(splus, sz, cp, cd, bz, params.chi_p,
                                params.chi_d, params.gamma_p, params.gamma_d,
                                dt, chunk)
            s[:, 0] = splus.real
            s[:, 1] = splus.imag
            s[:, 2] = sz
        else:
            for _ in range(chunk):
                k1 = _derivative(s, params, grid, exclude_self)[0]
                k2 = _derivative(s + 0.5 * dt * k1, params, grid, exclude_self)[0]
                k3 = _derivative(s + 0.5 * dt * k2, params, grid, exclude_self)[0]
                k4 = _derivative(s + dt * k3, params, grid, exclude_self)[0]
                s += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        k += chunk
        record(k * dt, s)

    return Trace(times=np.asarray(times), delta_p=np.asarray(dps),
                 delta_d=np.asarray(dds), n_c=np.asarray(ncs),
                 energy=np.asarray(ens),
                 spins=np.asarray(snaps) if keep_spins else None,
                 spin_times=np.asarray(snap_times) if keep_spins else None,
                 meta={"dt": dt, "stride": stride})


def run_quench(grid: LatticeGrid, quench: QuenchSpec, n_c_frac: float,
               j: float = 1.0, loss_p: float = 0.0, loss_d: float = 0.0,
               stride: int = 10, keep_spins: bool = False,
               branch: str | None = None) -> Trace:
    """Prepare the ground texture at the initial couplings (optionally
    seeded) and evolve under the final couplings."""
    n = grid.n_sites
    params_i = ModelParams.from_ratios(quench.chi_p_i, quench.chi_d_i,
                                       n_c_frac, n, j=j)
    if branch == "p" or (branch is None and quench.chi_d_i == 0.0):
        from .groundstate import solve_p
        sol = solve_p(params_i, grid)
    elif branch == "d":
        from .groundstate import solve_d
        sol = solve_d(params_i, grid)
    else:
        sol = ground_branch(params_i, grid)
    spins0 = texture_from_solution(sol, params_i, grid,
                                   eps_d=quench.eps_d, eps_p=quench.eps_p)
    params_f = ModelParams.from_ratios(quench.chi_p_f, quench.chi_d_f,
                                       n_c_frac, n, j=j,
                                       loss_p=loss_p, loss_d=loss_d)
    trace = integrate(spins0, params_f, grid, quench.t_final,
                      dt=quench.dt, stride=stride, keep_spins=keep_spins)
    trace.meta.update(quench=quench, n_c_frac=n_c_frac,
                      prepared=sol.as_record())
    return trace


# ----------------------------------------------------------------------
# diagnostics

def long_time_stats(trace: Trace, window=None):
    """Time averages over the window: dict of Avg and Std for both channels.

    Std uses the second-moment form sqrt(Avg(|D|^2) - Avg(|D|)^2).
    """
    mask = trace.default_window() if window is None else trace.window(*window)
    out = {}
    for name, series in (("p", trace.delta_p), ("d", trace.delta_d)):
        a = np.abs(series[mask])
        avg = float(np.mean(a))
        var = max(float(np.mean(a**2) - avg**2), 0.0)
        out[f"avg_{name}"] = avg
        out[f"std_{name}"] = math.sqrt(var)
    return out


@dataclass(frozen=True)
class MuInfEstimate:
    value: float
    residual: float
    confident: bool


MU_INF_RESID_TOL = 0.05  # rad, rms of the linear phase fit


def extract_mu_inf(trace: Trace, window=None, channel: str = "p",
                   resid_tol: float = MU_INF_RESID_TOL) -> MuInfEstimate:
    """Long-time chemical potential from the order-parameter winding.

    The steady phase evolves as exp(-2 i mu t), clockwise for mu > 0; the
    estimate is -slope/2 of the unwrapped phase over the window, flagged
    low-confidence when the fit residual exceeds ``resid_tol``.
    """
    mask = trace.default_window() if window is None else trace.window(*window)
    series = trace.delta_p if channel == "p" else trace.delta_d
    t = trace.times[mask]
    z = series[mask]
    if t.size < 4:
        raise ValueError("window holds too few samples for a phase fit")
    phase = np.unwrap(np.angle(z))
    slope, intercept = np.polyfit(t, phase, 1)
    resid = float(np.sqrt(np.mean((phase - (slope * t + intercept)) ** 2)))
    return MuInfEstimate(value=-0.5 * float(slope), residual=resid,
                         confident=resid <= resid_tol)


def osc_frequency(trace: Trace, window=None, channel: str = "p") -> float:
    """Dominant oscillation frequency of |Delta| (cycles per unit time).

    Discrete-Fourier peak with quadratic interpolation; raises NoPeakError
    for flat spectra (phase I/II traces).
    """
    mask = trace.default_window() if window is None else trace.window(*window)
    series = trace.delta_p if channel == "p" else trace.delta_d
    t = trace.times[mask]
    a = np.abs(series[mask])
    if t.size < 8:
        raise NoPeakError("window holds too few samples")
    a = a - np.mean(a)
    scale = float(np.mean(np.abs(series[mask]))) + 1e-300
    amp = np.abs(np.fft.rfft(a * np.hanning(a.size)))
    amp[0] = 0.0
    k = int(np.argmax(amp))
    if k == 0 or amp[k] < 1e-4 * scale * a.size:
        raise NoPeakError("spectrum is flat; no persistent oscillation")
    # quadratic peak interpolation on the three neighboring bins
    if 1 <= k < amp.size - 1:
        am, a0, ap = amp[k - 1], amp[k], amp[k + 1]
        denom = am - 2.0 * a0 + ap
        shift = 0.5 * (am - ap) / denom if denom != 0.0 else 0.0
    else:
        shift = 0.0
    duration = t[-1] - t[0]
    return (k + shift) / duration


PHASE_I = "I"
PHASE_II_BCS = "II-BCS"
PHASE_II_BEC = "II-BEC"
PHASE_III = "III"
PHASE_III_STAR = "III*"


@dataclass(frozen=True)
class PhaseLabel:
    label: str
    mu_inf: float | None
    margins: dict
    ambiguous: bool
    sub_label_method: str = ""


def classify_dynamical_phase(trace: Trace, mu_inf: float | None = None,
                             quench: QuenchSpec | None = None,
                             n_c_frac: float | None = None,
                             a_tol: float = 1e-2, s_tol: float = 1e-2,
                             lax_levels: int = 30,
                             window=None) -> PhaseLabel:
    """Label a quench trace as I / II-BCS / II-BEC / III / III*.

    Thresholds: long-time Avg below ``a_tol`` of the prepared order
    parameter is phase I; Std below ``s_tol`` of Avg is phase II with the
    sign of the winding splitting BCS/BEC.  The III vs III* sub-split is
    decided by the Lax root count when the quench has no d-channel
    (otherwise the trace alone cannot resolve it and plain III is returned
    with the margins reported).

    The reference scale is the preparation-state gap (the trace's own t=0
    value carries the quenched coupling as a prefactor); it is read from
    ``trace.meta["prepared"]`` when present, else from the first sample.
    """
    stats = long_time_stats(trace, window=window)
    delta0 = float(abs(trace.delta_p[0]))
    prepared = trace.meta.get("prepared")
    if prepared:
        delta0 = max(abs(prepared.get("delta_p", 0.0)),
                     abs(prepared.get("delta_d", 0.0))) or delta0
    avg, std = stats["avg_p"], stats["std_p"]
    avg_ratio = avg / (delta0 + 1e-300)
    std_ratio = std / (avg + 1e-300)
    margins = {"avg_over_initial": avg_ratio, "std_over_avg": std_ratio,
               "a_tol": a_tol, "s_tol": s_tol}
    ambiguous = (0.5 * a_tol <= avg_ratio <= 2.0 * a_tol
                 or (avg_ratio > a_tol
                     and 0.5 * s_tol <= std_ratio <= 2.0 * s_tol))

    if avg_ratio < a_tol:
        return PhaseLabel(PHASE_I, None, margins, ambiguous)

    est = extract_mu_inf(trace, window=window) if mu_inf is None else None
    mu_val = mu_inf if mu_inf is not None else est.value
    if std_ratio < s_tol:
        label = PHASE_II_BCS if mu_val > 0.0 else PHASE_II_BEC
        return PhaseLabel(label, mu_val, margins, ambiguous)

    label, method = PHASE_III, "std-threshold"
    if (quench is not None and n_c_frac is not None
            and quench.chi_d_i == 0.0 and quench.chi_d_f == 0.0):
        from . import lax
        from .lattice import uniform_level_grid
        levels = uniform_level_grid(lax_levels)
        cls = lax.isolated_roots(quench.chi_p_i, quench.chi_p_f,
                                 n_c_frac, levels)
        if cls.label in (PHASE_III, PHASE_III_STAR):
            label, method = cls.label, "lax-roots"
    return PhaseLabel(label, mu_val, margins, ambiguous,
                      sub_label_method=method)


# ----------------------------------------------------------------------
# cavity readout

@dataclass(frozen=True)
class ReadoutParams:
    """Heterodyne readout constants: per-channel gains (complex), drive
    detunings from the dressed cavity resonance, and the cavity decay."""

    gain_p: complex
    gain_d: complex
    delta_ca: float
    delta_cb: float
    kappa: float


def cavity_output(trace: Trace, readout: ReadoutParams, params: ModelParams,
                  n_sites: int, t_step: float | None = None):
    """Cavity amplitude and leaked-photon estimates from a trace.

    ``alpha_b(t) = Delta_p/gain_p* exp(-i d_cA t) + Delta_d/gain_d* exp(-i d_cB t)``;
    photon numbers integrate kappa |Delta/gain|^2 over windows of ``t_step``
    (default: the whole trace as one window).
    """
    t = trace.times
    alpha = np.zeros(t.size, dtype=complex)
    if params.chi_p > 0.0:
        alpha += (trace.delta_p / np.conj(readout.gain_p)
                  * np.exp(-1j * readout.delta_ca * t))
    if params.chi_d > 0.0:
        alpha += (trace.delta_d / np.conj(readout.gain_d)
                  * np.exp(-1j * readout.delta_cb * t))

    if t_step is None:
        t_step = t[-1] - t[0] if t.size > 1 else 1.0
    edges = np.arange(t[0], t[-1] + t_step, t_step)
    n_p, n_d = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (t >= lo) & (t <= hi)
        if not np.any(m):
            n_p.append(0.0)
            n_d.append(0.0)
            continue
        rate_p = readout.kappa * np.abs(trace.delta_p[m]) ** 2 / abs(readout.gain_p) ** 2
        rate_d = readout.kappa * np.abs(trace.delta_d[m]) ** 2 / abs(readout.gain_d) ** 2
        n_p.append(float(np.trapezoid(rate_p, trace.times[m])))
        n_d.append(float(np.trapezoid(rate_d, trace.times[m])))
    return alpha, np.asarray(n_p), np.asarray(n_d)
