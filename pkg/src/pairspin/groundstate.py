"""Self-consistent mean-field branches, energies, textures, Chern numbers.

Four branch types: normal (no pairing), pure p, pure d, and mixed.  Pure
branches solve two coupled sums for (delta, mu) at fixed pair filling; the
order parameter is gauged real and nonnegative.  Energies select the ground
branch, and converged textures feed the topological diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from .errors import NonConvergenceError
from .lattice import LatticeGrid, LevelGrid, MomentumGrid, eta_weights

# couplings below this count as exact zero modes (degenerate at mu = 0)
ZERO_MODE_TOL = 1e-12

BRANCH_NORMAL = "normal"
BRANCH_P = "p_only"
BRANCH_D = "d_only"
BRANCH_MIXED = "mixed"


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the effective pairing model.  ``j`` is the global unit.

    ``chi_p`` and ``chi_d`` are the per-spin exchange strengths; the
    dimensionless combinations quoted throughout are ``chi*N/j``.
    ``gamma_p``/``gamma_d`` are the collective photon-loss rates.
    """

    chi_p: float
    chi_d: float
    n_c_frac: float
    j: float = 1.0
    gamma_p: float = 0.0
    gamma_d: float = 0.0

    def __post_init__(self):
        if self.j <= 0:
            raise ValueError("j must be positive")
        if self.chi_p < 0 or self.chi_d < 0:
            raise ValueError("couplings must be nonnegative")
        if not 0.0 < self.n_c_frac < 1.0:
            raise ValueError("n_c_frac must lie in (0, 1)")
        if self.gamma_p < 0 or self.gamma_d < 0:
            raise ValueError("loss rates must be nonnegative")

    @classmethod
    def from_ratios(cls, chi_p: float, chi_d: float, n_c_frac: float,
                    n_sites: int, j: float = 1.0,
                    loss_p: float = 0.0, loss_d: float = 0.0) -> "ModelParams":
        """Build from the dimensionless ratios ``chi*N/j``.

        ``loss_p``/``loss_d`` are cavity loss-to-detuning ratios
        ``kappa/|delta_c|``; the dissipation rate per channel is that ratio
        times the channel coupling.
        """
        cp = chi_p * j / n_sites
        cd = chi_d * j / n_sites
        return cls(chi_p=cp, chi_d=cd, n_c_frac=n_c_frac, j=j,
                   gamma_p=loss_p * cp, gamma_d=loss_d * cd)

    def ratio_p(self, n_sites: int) -> float:
        return self.chi_p * n_sites / self.j

    def ratio_d(self, n_sites: int) -> float:
        return self.chi_d * n_sites / self.j


@dataclass(frozen=True)
class MFSolution:
    """One self-consistent branch: order parameters, mu, energy, residual."""

    branch: str
    delta_p: float
    delta_d: float
    mu: float
    e_mf: float
    residual: float
    on_first_order_line: bool = False
    degenerate_zero_modes: bool = False

    def as_record(self) -> dict:
        return {
            "branch": self.branch,
            "delta_p": self.delta_p,
            "delta_d": self.delta_d,
            "mu": self.mu,
            "e_mf": self.e_mf,
            "residual": self.residual,
        }


# ----------------------------------------------------------------------
# gap-equation internals
#
# Pure-channel equations, channel power m (1 for p, 2 for d):
#   occupation:  sum_n (j*eta^2 - mu) / (2 E_n) = N/2 - N_C
#   gap:         chi * sum_n eta^(2m) / (2 E_n) = 1
# with E_n = sqrt((j*eta^2 - mu)^2 + delta^2 * eta^(2m)).

def _quasienergy(delta, mu, eta2, etam2, j):
    return np.sqrt((j * eta2 - mu) ** 2 + delta**2 * etam2)


def _residuals(delta, mu, eta2, etam2, w, j, chi, n_c_frac, n):
    e = _quasienergy(delta, mu, eta2, etam2, j)
    xi = j * eta2 - mu
    with np.errstate(invalid="ignore", divide="ignore"):
        occ = np.where(e > 0.0, xi / e, 0.0)
        gap = np.where(e > 0.0, etam2 / e, 0.0)
    f1 = float(w @ occ) / (2.0 * n) - (0.5 - n_c_frac)
    f2 = chi * float(w @ gap) / 2.0 - 1.0
    return f1, f2, e


def _jacobian(delta, mu, eta2, etam2, w, j, chi, n):
    e = _quasienergy(delta, mu, eta2, etam2, j)
    xi = j * eta2 - mu
    e3 = e**3
    good = e > 0.0
    inv_e3 = np.where(good, 1.0 / np.where(good, e3, 1.0), 0.0)
    d_f1_mu = -float(w @ (delta**2 * etam2 * inv_e3)) / (2.0 * n)
    d_f1_delta = -delta * float(w @ (xi * etam2 * inv_e3)) / (2.0 * n)
    d_f2_mu = chi * float(w @ (etam2 * xi * inv_e3)) / 2.0
    d_f2_delta = -chi * delta * float(w @ (etam2**2 * inv_e3)) / 2.0
    return np.array([[d_f1_delta, d_f1_mu], [d_f2_delta, d_f2_mu]])


def _solve_zero_mu(eta2, etam2, w, j, chi, n_c_frac, n, n_zero):
    """Degenerate branch: mu pinned at 0 by fractional zero-mode filling.

    At mu = 0 sites with eta = 0 feel no field, so their occupancy is free;
    a solution with mu exactly 0 exists whenever the leftover occupation
    deficit fits inside the zero-mode capacity.  Returns (delta, deficit)
    or None.
    """
    if n_zero == 0:
        return None
    nonzero = eta2 > ZERO_MODE_TOL**2

    def gap_eq(log_delta):
        d = math.exp(log_delta)
        e = _quasienergy(d, 0.0, eta2[nonzero], etam2[nonzero], j)
        return chi * float(w[nonzero] @ (etam2[nonzero] / e)) / 2.0 - 1.0

    lo, hi = math.log(1e-12 * j), math.log(1e4 * j)
    if gap_eq(lo) < 0.0 or gap_eq(hi) > 0.0:
        return None
    log_d = optimize.brentq(gap_eq, lo, hi, xtol=1e-14)
    delta = math.exp(log_d)
    e = _quasienergy(delta, 0.0, eta2[nonzero], etam2[nonzero], j)
    occupied = float(w[nonzero] @ ((j * eta2[nonzero]) / e)) / 2.0
    deficit = (0.5 - n_c_frac) * n - occupied  # to be absorbed by zero modes
    if abs(deficit) <= 0.5 * n_zero * (1.0 - 1e-12):
        return delta, deficit
    return None


def _newton_gap(eta, w, j, chi, n_c_frac, m, delta0, mu0,
                rtol=1e-12, max_iter=200):
    eta2 = eta**2
    etam2 = eta ** (2 * m)
    n = float(w.sum())
    log_lo, log_hi = math.log(1e-300), math.log(1e8 * j)
    x = np.array([min(max(math.log(max(delta0, 1e-300)), log_lo), log_hi), mu0])

    def res(x):
        x[0] = min(max(x[0], log_lo), log_hi)
        f1, f2, _ = _residuals(math.exp(x[0]), x[1], eta2, etam2, w, j, chi,
                               n_c_frac, n)
        return np.array([f1, f2])

    f = res(x)
    for _ in range(max_iter):
        if np.max(np.abs(f)) < rtol:
            break
        delta = math.exp(x[0])
        jac = _jacobian(delta, x[1], eta2, etam2, w, j, chi, n)
        jac[:, 0] *= delta  # chain rule for log-delta parameterization
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        norm0 = float(f @ f)
        while lam > 1e-6:
            x_new = x + lam * step
            f_new = res(x_new)
            if float(f_new @ f_new) < norm0:
                x, f = x_new, f_new
                break
            lam *= 0.5
        else:
            break
    return math.exp(x[0]), float(x[1]), float(np.max(np.abs(f)))


def _bisect_gap(eta, w, j, chi, n_c_frac, m, rtol=1e-12):
    """Nested-bracket fallback: mu from the occupation sum at fixed delta,
    then delta from the gap sum."""
    eta2 = eta**2
    etam2 = eta ** (2 * m)
    n = float(w.sum())

    def mu_of_delta(delta):
        def occ(mu):
            f1, _, _ = _residuals(delta, mu, eta2, etam2, w, j, chi,
                                  n_c_frac, n)
            return f1
        lo, hi = -10.0 * j - 10.0 * delta, 10.0 * j + 10.0 * delta
        return optimize.brentq(occ, lo, hi, xtol=1e-15)

    def gap(log_delta):
        d = math.exp(log_delta)
        mu = mu_of_delta(d)
        _, f2, _ = _residuals(d, mu, eta2, etam2, w, j, chi, n_c_frac, n)
        return f2

    lo, hi = math.log(1e-280 * j), math.log(1e4 * j)
    if gap(hi) > 0.0:
        raise NonConvergenceError("gap equation has no bracket", residual=gap(hi))
    if gap(lo) < 0.0:
        raise NonConvergenceError("order parameter underflows", residual=gap(lo))
    log_d = optimize.brentq(gap, lo, hi, xtol=1e-14)
    delta = math.exp(log_d)
    mu = mu_of_delta(delta)
    f1, f2, _ = _residuals(delta, mu, eta2, etam2, w, j, chi, n_c_frac, n)
    return delta, mu, max(abs(f1), abs(f2))


def _solve_pure(params: ModelParams, grid, m: int, chi: float,
                init_guess=None, rtol=1e-10) -> MFSolution:
    eta, w = eta_weights(grid)
    j, n_c = params.j, params.n_c_frac
    n = float(w.sum())
    if chi <= 0.0:
        raise ValueError("channel coupling must be positive for a paired branch")

    eta2 = eta**2
    etam2 = eta ** (2 * m)
    n_zero = float(w[eta <= ZERO_MODE_TOL].sum())
    degenerate = _solve_zero_mu(eta2, etam2, w, j, chi, n_c, n, n_zero)
    if degenerate is not None:
        delta, _ = degenerate
        branch = BRANCH_P if m == 1 else BRANCH_D
        sol = MFSolution(branch=branch, delta_p=delta if m == 1 else 0.0,
                         delta_d=delta if m == 2 else 0.0, mu=0.0,
                         e_mf=0.0, residual=0.0, degenerate_zero_modes=True)
        return replace(sol, e_mf=mf_energy(sol, params, grid))

    if init_guess is None:
        ratio = chi * n / j
        mu0 = solve_normal(params, grid).mu
        if ratio > 4.0:
            delta0 = chi * n / math.pi if m == 1 else chi * n / 4.0
        else:
            delta0 = 1e-3 * j
    else:
        delta0, mu0 = init_guess

    delta, mu, resid = _newton_gap(eta, w, j, chi, n_c, m, delta0, mu0)
    if resid > rtol:
        delta, mu, resid = _bisect_gap(eta, w, j, chi, n_c, m)
    if resid > rtol:
        raise NonConvergenceError(
            f"gap equations stalled at residual {resid:.3e}", residual=resid)
    branch = BRANCH_P if m == 1 else BRANCH_D
    sol = MFSolution(branch=branch, delta_p=delta if m == 1 else 0.0,
                     delta_d=delta if m == 2 else 0.0, mu=mu, e_mf=0.0,
                     residual=resid)
    return replace(sol, e_mf=mf_energy(sol, params, grid))


# ----------------------------------------------------------------------
# public solvers

def solve_normal(params: ModelParams, grid=None) -> MFSolution:
    """Unpaired Fermi distribution: mu/j = sin^2(pi*N_C/2N)."""
    mu = params.j * math.sin(0.5 * math.pi * params.n_c_frac) ** 2
    sol = MFSolution(branch=BRANCH_NORMAL, delta_p=0.0, delta_d=0.0, mu=mu,
                     e_mf=0.0, residual=0.0)
    if grid is not None:
        sol = replace(sol, e_mf=mf_energy(sol, params, grid))
    return sol


def solve_p(params: ModelParams, grid, init_guess=None,
            rtol=1e-10) -> MFSolution:
    """Pure p-channel branch (delta_d = 0)."""
    return _solve_pure(params, grid, m=1, chi=params.chi_p,
                       init_guess=init_guess, rtol=rtol)


def solve_d(params: ModelParams, grid, init_guess=None,
            rtol=1e-10) -> MFSolution:
    """Pure d-channel branch (delta_p = 0)."""
    return _solve_pure(params, grid, m=2, chi=params.chi_d,
                       init_guess=init_guess, rtol=rtol)


# Gauge: the relative phase between the two order parameters is removable,
# so the mixed ansatz takes both real and positive.
MIXED_COLLAPSE_TOL = 1e-8


def solve_mixed(params: ModelParams, grid: LatticeGrid, init_guess=None,
                rtol=1e-10) -> MFSolution:
    """Search for a root with both channels nonzero.

    Returns a converged mixed root, or the pure branch it collapsed onto
    (one order parameter below ``MIXED_COLLAPSE_TOL * j``).  With one
    coupling zero this reduces exactly to the corresponding pure solver.
    """
    if params.chi_d <= 0.0 < params.chi_p:
        return solve_p(params, grid, rtol=rtol)
    if params.chi_p <= 0.0 < params.chi_d:
        return solve_d(params, grid, rtol=rtol)
    if params.chi_p <= 0.0 and params.chi_d <= 0.0:
        return solve_normal(params, grid)

    cp = grid.coupling_p
    cd = grid.coupling_d
    eta2 = grid.eta**2
    j, n_c = params.j, params.n_c_frac
    n = grid.n_sites

    def residual(x):
        dp, dd, mu = math.exp(x[0]), math.exp(x[1]), x[2]
        gap_site = dp * np.conj(cp) + dd * np.conj(cd)
        e = np.sqrt((j * eta2 - mu) ** 2 + np.abs(gap_site) ** 2)
        sminus = gap_site / (2.0 * e)
        rp = params.chi_p * np.sum(cp * sminus)
        rd = params.chi_d * np.sum(cd * sminus)
        occ = float(np.sum((j * eta2 - mu) / e)) / (2.0 * n) - (0.5 - n_c)
        return np.array([rp.real - dp, rd.real - dd, occ])

    if init_guess is None:
        p0 = solve_p(params, grid, rtol=rtol)
        dp0 = max(p0.delta_p, 1e-4 * j)
        dd0 = max(0.3 * params.chi_d * n / 4.0, 1e-4 * j)
        mu0 = p0.mu
    else:
        dp0, dd0, mu0 = init_guess
    x0 = np.array([math.log(dp0), math.log(dd0), mu0])
    res = optimize.root(residual, x0, method="hybr", tol=1e-13)
    dp, dd, mu = math.exp(res.x[0]), math.exp(res.x[1]), res.x[2]
    resid = float(np.max(np.abs(residual(res.x))))

    if dp < MIXED_COLLAPSE_TOL * j or dd < MIXED_COLLAPSE_TOL * j:
        # root collapsed onto a pure branch; report that branch as certificate
        if dp >= dd:
            return solve_p(params, grid, rtol=rtol)
        return solve_d(params, grid, rtol=rtol)
    if not res.success or resid > rtol * max(1.0, dp, dd):
        raise NonConvergenceError(
            f"mixed solve stalled at residual {resid:.3e}", residual=resid)
    sol = MFSolution(branch=BRANCH_MIXED, delta_p=dp, delta_d=dd, mu=mu,
                     e_mf=0.0, residual=resid)
    return replace(sol, e_mf=mf_energy(sol, params, grid))


def mf_energy(sol: MFSolution, params: ModelParams, grid) -> float:
    """Mean-field energy of a converged branch.

    ``E = -sum_n E_n + delta_p^2/chi_p + delta_d^2/chi_d - mu (N - 2 N_C)``;
    channels with zero coupling carry zero order parameter and contribute
    nothing.
    """
    eta, w = eta_weights(grid)
    n = float(w.sum())
    if isinstance(grid, LatticeGrid) and sol.delta_p * sol.delta_d != 0.0:
        # mixed gap carries a site-phase cross term, needs the full lattice
        gap2 = np.abs(sol.delta_p * np.conj(grid.coupling_p)
                      + sol.delta_d * np.conj(grid.coupling_d)) ** 2
        e_sum = float(np.sum(np.sqrt((params.j * grid.eta**2 - sol.mu) ** 2
                                     + gap2)))
    else:
        eta2 = eta**2
        gap2 = sol.delta_p**2 * eta2 + sol.delta_d**2 * eta2**2
        e_sum = float(w @ np.sqrt((params.j * eta2 - sol.mu) ** 2 + gap2))
    out = -e_sum - sol.mu * n * (1.0 - 2.0 * params.n_c_frac)
    if params.chi_p > 0.0:
        out += sol.delta_p**2 / params.chi_p
    if params.chi_d > 0.0:
        out += sol.delta_d**2 / params.chi_d
    return out


FIRST_ORDER_TIE_RTOL = 1e-9


def ground_branch(params: ModelParams, grid) -> MFSolution:
    """Lower-energy pure branch; ties flag the first-order line."""
    candidates = []
    if params.chi_p > 0.0:
        candidates.append(solve_p(params, grid))
    if params.chi_d > 0.0:
        candidates.append(solve_d(params, grid))
    if not candidates:
        return solve_normal(params, grid)
    if len(candidates) == 1:
        return candidates[0]
    ep, ed = candidates[0].e_mf, candidates[1].e_mf
    scale = max(abs(ep), abs(ed), 1e-300)
    winner = candidates[0] if ep <= ed else candidates[1]
    if abs(ep - ed) <= FIRST_ORDER_TIE_RTOL * scale:
        winner = replace(winner, on_first_order_line=True)
    return winner


def qcp_p(n_c_frac: float) -> float:
    """p-channel critical coupling, as chi*N/j = (1/2 - N_C/N)^-1."""
    if not 0.0 < n_c_frac < 0.5:
        raise ValueError("no BCS-side critical point for n_c_frac >= 1/2")
    return 1.0 / (0.5 - n_c_frac)


def qcp_d(n_c_frac: float) -> float:
    """d-channel critical coupling, as chi*N/j = (1/4 - N_C/2N)^-1."""
    if not 0.0 < n_c_frac < 0.5:
        raise ValueError("no BCS-side critical point for n_c_frac >= 1/2")
    return 1.0 / (0.25 - 0.5 * n_c_frac)


# ----------------------------------------------------------------------
# textures

def texture_from_solution(sol: MFSolution, params: ModelParams,
                          grid: LatticeGrid, eps_d: float = 0.0,
                          eps_p: float = 0.0) -> np.ndarray:
    """Spin texture aligned with the self-consistent field, with optional
    seed of the competing channel.

    ``eps_d`` tilts a p branch by ``delta_p*eps_d`` worth of d-channel
    structure (and ``eps_p`` symmetrically for the d branch).  Returns an
    (N, 3) array of length-1/2 Bloch vectors.
    """
    if eps_d < 0.0 or eps_p < 0.0:
        raise ValueError("perturbations must be nonnegative")
    amp_p = sol.delta_p + eps_p * sol.delta_d
    amp_d = sol.delta_d + eps_d * sol.delta_p
    gap_site = amp_p * np.conj(grid.coupling_p) + amp_d * np.conj(grid.coupling_d)
    xi = params.j * grid.eta**2 - sol.mu
    e = np.sqrt(xi**2 + np.abs(gap_site) ** 2)
    spins = np.empty((grid.n_sites, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        sminus = np.where(e > 0.0, gap_site / (2.0 * e), 0.0)
        sz = np.where(e > 0.0, -xi / (2.0 * e), 0.0)
    spins[:, 0] = sminus.real
    spins[:, 1] = -sminus.imag
    spins[:, 2] = sz
    return spins


# ----------------------------------------------------------------------
# Chern numbers

CHERN_INT_TOL = 1e-2


def chern_equilibrium(sol: MFSolution, mu_tol: float = 0.0):
    """Chern number from the sign of mu: p gives (1+sgn mu)/2, d gives
    (1+sgn mu).  Returns None at the critical point (mu = 0)."""
    if sol.branch not in (BRANCH_P, BRANCH_D):
        raise ValueError("equilibrium Chern number defined for pure branches")
    if abs(sol.mu) <= mu_tol or sol.mu == 0.0:
        return None
    if sol.mu < 0.0:
        return 0
    return 1 if sol.branch == BRANCH_P else 2


def solid_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed solid angle of the spherical triangle (a, b, c), unit vectors.

    Broadcasts over leading axes; vectors on the last axis.
    """
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = (1.0 + np.einsum("...i,...i->...", a, b)
           + np.einsum("...i,...i->...", b, c)
           + np.einsum("...i,...i->...", c, a))
    return 2.0 * np.arctan2(num, den)


def texture_on_momentum_grid(spins: np.ndarray,
                             mgrid: MomentumGrid) -> np.ndarray:
    """Reduce a per-site texture to one unit vector per (level, ring) cell."""
    if not mgrid.complete:
        raise ValueError("momentum grid has empty (level, ring) cells; "
                         "Chern evaluation needs a complete phi ring")
    sigma = 2.0 * spins[mgrid.site_of]
    norms = np.linalg.norm(sigma, axis=-1, keepdims=True)
    return sigma / norms


def chern_discrete(sigma: np.ndarray, int_tol: float = CHERN_INT_TOL) -> int:
    """Chern number of a discrete texture by summed solid angles.

    ``sigma``: (levels, ring, 3) unit vectors ordered by ascending level and
    ascending ring angle.  A fictitious all-down level is appended above the
    cutoff so the sum is quantized.  Raises if the result sits further than
    ``int_tol`` from an integer (unresolved texture).
    """
    m, r, _ = sigma.shape
    ext = np.concatenate([sigma, np.tile([0.0, 0.0, -1.0], (1, r, 1))], axis=0)
    a = ext[:-1]                          # (j, l)
    b = ext[1:]                           # (j+1, l)
    c = np.roll(ext[1:], -1, axis=1)      # (j+1, l+1)
    d = np.roll(ext[:-1], -1, axis=1)     # (j, l+1)
    total = np.sum(solid_angle(a, b, c)) + np.sum(solid_angle(a, c, d))
    # close the surface over the innermost ring polygon
    inner = sigma[0]
    for l in range(1, r - 1):
        total += solid_angle(inner[0], inner[l], inner[l + 1])
    q = total / (4.0 * np.pi)
    nearest = round(float(q))
    if abs(q - nearest) > int_tol:
        raise ValueError(f"solid-angle sum {q:.6f} is not close to an integer; "
                         "texture is unresolved on this grid")
    return int(nearest)


def chern_from_state(spins: np.ndarray, mgrid: MomentumGrid,
                     int_tol: float = CHERN_INT_TOL) -> int:
    """Convenience: reduce a lattice texture and evaluate its Chern number."""
    return chern_discrete(texture_on_momentum_grid(spins, mgrid), int_tol)
