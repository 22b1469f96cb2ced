"""Lax-vector diagnostics for p-channel quenches (no d coupling).

The conserved spectral function of a quench from ``chi_p_i`` to ``chi_p_f``
is, for the equilibrium initial texture,

    L^2(u)/N^2 = beta^2 + beta (u - 2 mu) f(u) + [f(u) E(u)]^2,
    beta = 2 j/(chi_f N) - 2 j/(chi_i N),

with ``f(u)`` a weighted sum of simple poles at twice the kinetic energies.
Clearing denominators turns ``L^2(u) = 0`` into a real polynomial whose
isolated root pairs count the dynamical phase: 0 pairs decay (I), 1 pair a
steady gap (II), 2 pairs persistent oscillations (III, or III* when every
isolated root sits on the negative real axis).

For real positive ``u`` away from the band,
``L^2 = (beta + f (u-2mu)/2)^2 + f^2 Delta^2 u/(2 j) > 0`` strictly, so at
finite level count the "continuum" shows up as conjugate pairs hugging the
band with imaginary parts one collective level spacing wide; isolation is
judged against that self-calibrated scale rather than a fixed epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import DegenerateRootsError, NoRootError, PoleHitError
from .groundstate import ModelParams, solve_p
from .lattice import LatticeGrid, LevelGrid, uniform_level_grid

# isolated if |Im u| exceeds HI x (local continuum Im scale); continuum if
# below LO x; in between the identification is ambiguous
ISOLATION_HI = 6.0
ISOLATION_LO = 2.5
NEG_REAL_TOL = 1e-7
U_ZERO_TOL = 1e-6

PHASE_I = "I"
PHASE_II = "II"
PHASE_III = "III"
PHASE_III_STAR = "III*"


@dataclass(frozen=True)
class EquilibriumInit:
    """Pre-quench equilibrium data on a level grid (j = 1 units)."""

    chi_p_i: float
    n_c_frac: float
    delta_p0: float
    mu: float
    levels: LevelGrid


@dataclass(frozen=True)
class LaxClassification:
    roots: np.ndarray
    isolated: np.ndarray
    kinds: tuple
    n_pairs: int
    label: str
    u_zero_isolated: bool
    beta: float


def equilibrium_init(chi_p_i: float, n_c_frac: float,
                     levels: LevelGrid) -> EquilibriumInit:
    """Solve the discrete gap equations on the level grid (chi as chi*N/j)."""
    params = ModelParams.from_ratios(chi_p_i, 0.0, n_c_frac, levels.n_sites)
    sol = solve_p(params, levels)
    return EquilibriumInit(chi_p_i=chi_p_i, n_c_frac=n_c_frac,
                           delta_p0=sol.delta_p, mu=sol.mu, levels=levels)


def _pole_data(eq: EquilibriumInit, j: float = 1.0):
    eta = eq.levels.eta
    w = eq.levels.weight
    keep = eta > 1e-12
    eta, w = eta[keep], w[keep]
    n = float(eq.levels.weight.sum())
    x = 2.0 * j * eta**2
    e = np.sqrt((j * eta**2 - eq.mu) ** 2 + eq.delta_p0**2 * eta**2)
    a = w * x / (n * e)
    order = np.argsort(x)
    return x[order], a[order]


def _beta(chi_p_i: float, chi_p_f: float) -> float:
    return 2.0 / chi_p_f - 2.0 / chi_p_i


def lax_norm(u, eq: EquilibriumInit, chi_p_f: float, j: float = 1.0):
    """L^2(u)/N^2 for the equilibrium initial state (closed form)."""
    x, a = _pole_data(eq, j)
    u = complex(u)
    if np.min(np.abs(u - x)) < 1e-12 * j:
        raise PoleHitError(f"u = {u} sits on a kinetic pole")
    f = np.sum(a / (u - x))
    e2 = (0.5 * u - eq.mu) ** 2 + eq.delta_p0**2 * u / (2.0 * j)
    beta = _beta(eq.chi_p_i, chi_p_f)
    return beta**2 + beta * (u - 2.0 * eq.mu) * f + f**2 * e2


def lax_norm_state(u, spins: np.ndarray, grid: LatticeGrid, chi_p_f: float,
                   j: float = 1.0):
    """L^2(u)/N^2 of an arbitrary spin state (conserved along gamma = 0,
    chi_d = 0 trajectories).

    The site phases are gauged away (p-channel only) before assembling the
    Lax components.
    """
    eta = grid.eta
    n = grid.n_sites
    x = 2.0 * j * eta**2
    u = complex(u)
    if np.min(np.abs(u - x[eta > 1e-12])) < 1e-12 * j:
        raise PoleHitError(f"u = {u} sits on a kinetic pole")
    sminus = spins[:, 0] - 1j * spins[:, 1]
    sm_gauged = np.exp(1j * grid.phi) * sminus
    sx = np.real(sm_gauged)
    sy = -np.imag(sm_gauged)
    root_u = np.sqrt(u)
    coef = 2.0 * math.sqrt(2.0 * j) * root_u * eta / (u - x)
    lx = np.sum(coef * sx)
    ly = np.sum(coef * sy)
    lz = 2.0 * j * n / chi_p_f - np.sum(4.0 * j * eta**2 / (u - x) * spins[:, 2])
    return (lx**2 + ly**2 + lz**2) / n**2


def _cleared_polynomial(eq: EquilibriumInit, chi_p_f: float, j: float = 1.0):
    """Coefficients (descending) of L^2(u)/N^2 times prod_k (u - x_k)^2."""
    x, a = _pole_data(eq, j)
    beta = _beta(eq.chi_p_i, chi_p_f)
    base = np.poly(x)  # prod (u - x_k), descending coefficients
    f_num = np.zeros(x.size)
    for k in range(x.size):
        partial = np.poly(np.delete(x, k))
        f_num = np.polyadd(f_num, a[k] * partial)
    e2 = np.array([0.25, -eq.mu + eq.delta_p0**2 / (2.0 * j), eq.mu**2])
    term1 = beta**2 * np.polymul(base, base)
    term2 = beta * np.polymul(np.array([1.0, -2.0 * eq.mu]),
                              np.polymul(f_num, base))
    term3 = np.polymul(np.polymul(f_num, f_num), e2)
    return np.polyadd(np.polyadd(term1, term2), term3), x, beta


def _continuum_im_scale(roots: np.ndarray, x: np.ndarray) -> float:
    """Median |Im| of roots whose real part lies inside the band: the
    finite-size width of the continuum cloud."""
    band = roots[(roots.real > x[0] - 0.05 * x[-1])
                 & (roots.real < x[-1] + 0.05 * x[-1])
                 & (np.abs(roots.imag) > 0.0)]
    if band.size == 0:
        return 1e-12
    return float(np.median(np.abs(band.imag)))


def isolated_roots(chi_p_i: float, chi_p_f: float, n_c_frac: float,
                   levels: LevelGrid | int = 30,
                   j: float = 1.0) -> LaxClassification:
    """Find and classify the isolated root pairs of L^2(u) = 0.

    ``levels`` is the 1D grid of distinct kinetic levels (or its size).
    Roots come from companion-matrix eigenvalues of the cleared polynomial;
    the continuum cloud's own imaginary spread sets the isolation scale.
    """
    if isinstance(levels, int):
        levels = uniform_level_grid(levels)
    eq = equilibrium_init(chi_p_i, n_c_frac, levels)
    coeffs, x, beta = _cleared_polynomial(eq, chi_p_f, j)
    roots = np.roots(coeffs)

    scale = _continuum_im_scale(roots, x)
    neg_tol = NEG_REAL_TOL * j
    isolated = []
    kinds = []
    gray = []
    for r in roots:
        if r.imag < -1e-30:
            continue  # count each conjugate pair once (keep upper half + real)
        if r.real < -neg_tol and abs(r.imag) <= max(ISOLATION_LO * scale, neg_tol):
            isolated.append(r)
            kinds.append("negative-real")
            continue
        if r.imag <= 0.0:
            continue
        ratio = r.imag / scale
        in_band = x[0] - 10 * scale <= r.real <= x[-1] + 10 * scale
        if not in_band and r.real >= -neg_tol:
            # above or below the band on the positive side: genuinely split
            if abs(r.imag) > neg_tol or r.real > x[-1] + max(10 * scale, neg_tol):
                isolated.append(r)
                kinds.append("complex")
            continue
        if ratio >= ISOLATION_HI:
            isolated.append(r)
            kinds.append("complex")
        elif ratio > ISOLATION_LO and r.real >= -neg_tol:
            gray.append(r)
    if gray:
        raise DegenerateRootsError(
            "root(s) between the continuum cloud and isolation threshold: "
            f"{gray}", cluster=np.asarray(gray))

    # negative-real roots are simple zeros that pair up along the axis
    neg = sorted(r.real for r, k in zip(isolated, kinds)
                 if k == "negative-real")
    n_neg_pairs, odd = divmod(len(neg), 2)
    if odd:
        raise DegenerateRootsError(
            f"odd count of negative real roots: {neg}",
            cluster=np.asarray(neg))
    n_complex = sum(1 for k in kinds if k == "complex")
    n_pairs = n_complex + n_neg_pairs

    if n_pairs == 0:
        label = PHASE_I
    elif n_pairs == 1:
        label = PHASE_II
    elif n_complex > 0:
        label = PHASE_III
    else:
        label = PHASE_III_STAR
    u_zero = bool(isolated) and bool(
        np.min(np.abs(np.asarray(isolated))) < U_ZERO_TOL * j)
    return LaxClassification(roots=roots, isolated=np.asarray(isolated),
                             kinds=tuple(kinds), n_pairs=n_pairs, label=label,
                             u_zero_isolated=u_zero, beta=beta)


# ----------------------------------------------------------------------
# continuum-limit machinery (density of states g(y) = 1/(pi sqrt(y(1-y))))

def _gauss_mean(h, lo: float = 0.0, hi: float = 0.5 * math.pi,
                pts=None) -> float:
    """(2/pi) \\int h(cos^2 x) dx over [lo, hi] (adaptive)."""
    val, _ = integrate.quad(lambda t: h(math.cos(t) ** 2), lo, hi,
                            limit=400, points=pts)
    return 2.0 / math.pi * val


@dataclass(frozen=True)
class ContinuumEquilibrium:
    chi_p_i: float
    n_c_frac: float
    delta_p0: float
    mu: float


def continuum_equilibrium(chi_p_i: float, n_c_frac: float,
                          init=None) -> ContinuumEquilibrium:
    """Continuum gap equations for (delta_p0, mu) at coupling chi*N/j."""

    def eqs(z):
        d, mu = math.exp(z[0]), z[1]

        def r_inv(y):
            return 1.0 / math.sqrt((y - mu) ** 2 + d * d * y)

        occ = _gauss_mean(lambda y: (y - mu) * r_inv(y))
        gap = _gauss_mean(lambda y: y * r_inv(y))
        return [occ - (1.0 - 2.0 * n_c_frac), gap - 2.0 / chi_p_i]

    if init is None:
        mu0 = math.sin(0.5 * math.pi * n_c_frac) ** 2
        d0 = max(chi_p_i / math.pi if chi_p_i > 4.0 else
                 2.0 * math.exp(-5.0 / chi_p_i), 1e-8)
        init = (math.log(d0), mu0)
    sol = optimize.root(eqs, np.asarray(init), method="hybr", tol=1e-13)
    if not sol.success and np.max(np.abs(eqs(sol.x))) > 1e-10:
        raise NoRootError(f"continuum gap equations failed at chi={chi_p_i}")
    return ContinuumEquilibrium(chi_p_i=chi_p_i, n_c_frac=n_c_frac,
                                delta_p0=math.exp(sol.x[0]), mu=float(sol.x[1]))


def principal_value_mean(h, y0: float, h0: float | None = None,
                         n_levels: int = 3) -> float:
    """PV of (2/pi) \\int h(cos^2 x)/(cos^2 x - y0) dx over [0, pi/2].

    Symmetric excision of half-width h around the singular angle with
    Richardson extrapolation h -> 0 (leading excision error is linear).
    """
    if not 0.0 < y0 < 1.0:
        raise ValueError("singularity must lie inside the band")
    t0 = math.acos(math.sqrt(y0))
    if h0 is None:
        h0 = 0.25 * min(t0, 0.5 * math.pi - t0)

    def kern(t):
        y = math.cos(t) ** 2
        return h(y) / (y - y0)

    def excised(step):
        left, _ = integrate.quad(kern, 0.0, t0 - step, limit=400)
        right, _ = integrate.quad(kern, t0 + step, 0.5 * math.pi, limit=400)
        return 2.0 / math.pi * (left + right)

    vals = [excised(h0 / 2**k) for k in range(n_levels)]
    # Richardson ladder for error a1 h + a3 h^3 + ...
    for order in (1, 3):
        vals = [(2**order * b - a) / (2**order - 1)
                for a, b in zip(vals[:-1], vals[1:])]
    return vals[-1]


def g_dos(y: float) -> float:
    """Normalized density of states of the kinetic band."""
    return 1.0 / (math.pi * math.sqrt(y * (1.0 - y)))


def boundary_u0(sign_beta: int, chi_p_i: float, n_c_frac: float,
                u_grid: int = 201) -> tuple[float, float, float]:
    """Solve the real-axis boundary equations for (u0, |beta|, chi_p_f).

    ``sign_beta > 0`` (strong-to-weak quench) marks the I/II boundary,
    ``sign_beta < 0`` the II/III boundary.  Raises NoRootError when the
    branch has no solution in the band.
    """
    eqm = continuum_equilibrium(chi_p_i, n_c_frac)
    d, mu = eqm.delta_p0, eqm.mu
    sgn = 1.0 if sign_beta > 0 else -1.0

    def e_of(u):
        return math.sqrt((0.5 * u - mu) ** 2 + 0.5 * d * d * u)

    def pv_f(u0):
        y0 = 0.5 * u0
        return principal_value_mean(
            lambda y: 2.0 * y / (-2.0 * math.sqrt((y - mu) ** 2 + d * d * y)),
            y0)

    def mismatch(u0):
        y0 = 0.5 * u0
        rhs = (-sgn * (math.pi / d) * math.sqrt(0.5 * u0)
               * (0.5 * u0 - mu) / e_of(u0) * g_dos(y0))
        return pv_f(u0) - rhs

    us = np.linspace(2.0 / (u_grid + 1), 2.0 - 2.0 / (u_grid + 1), u_grid)
    vals = np.array([mismatch(u) for u in us])
    sign_change = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign_change.size == 0:
        raise NoRootError(f"no u0 root on the sign(beta)={sign_beta} branch")
    k = sign_change[0]
    u0 = optimize.brentq(mismatch, us[k], us[k + 1], xtol=1e-12)
    abs_beta = (math.pi / d) * math.sqrt(0.5 * u0) * e_of(u0) * g_dos(0.5 * u0)
    beta = sgn * abs_beta
    chi_p_f = 2.0 / (beta + 2.0 / chi_p_i)
    return u0, abs_beta, chi_p_f


def phase_iii_onset_coupling(n_c_frac: float) -> float:
    """Initial coupling where the II/III boundary root slides to u0 -> 0+.

    Solves the continuum equilibrium equations jointly with the closure
    relation (1 - 2 N_C/N - 2 j/(chi_i N))/mu = -1/delta.
    """

    def eqs(z):
        d, mu = math.exp(z[0]), z[1]

        def r_inv(y):
            return 1.0 / math.sqrt((y - mu) ** 2 + d * d * y)

        occ = _gauss_mean(lambda y: (y - mu) * r_inv(y))
        two_over_chi = _gauss_mean(lambda y: y * r_inv(y))
        c1 = occ - (1.0 - 2.0 * n_c_frac)
        c2 = (1.0 - 2.0 * n_c_frac - two_over_chi) / mu + 1.0 / d
        return [c1, c2]

    mu0 = math.sin(0.5 * math.pi * n_c_frac) ** 2
    sol = optimize.root(eqs, np.array([math.log(0.1), mu0]), method="hybr",
                        tol=1e-13)
    if not sol.success and np.max(np.abs(eqs(sol.x))) > 1e-10:
        raise NoRootError("u0 -> 0+ closure has no solution")
    d, mu = math.exp(sol.x[0]), sol.x[1]

    def r_inv(y):
        return 1.0 / math.sqrt((y - mu) ** 2 + d * d * y)

    two_over_chi = _gauss_mean(lambda y: y * r_inv(y))
    return 2.0 / two_over_chi


def _split_mean(h, mu: float) -> float:
    """(2/pi)[\\int_{x_mu}^{pi/2} - \\int_0^{x_mu}] h(cos^2 x) dx, i.e. the
    band integral of g(y) h(y) weighted by -sgn(y - mu)."""
    x_mu = math.acos(math.sqrt(mu))
    lo, _ = integrate.quad(lambda t: h(math.cos(t) ** 2), x_mu,
                           0.5 * math.pi, limit=400)
    hi, _ = integrate.quad(lambda t: h(math.cos(t) ** 2), 0.0, x_mu,
                           limit=400)
    return 2.0 / math.pi * (lo - hi)


def boundary_iii_star(n_c_frac: float) -> tuple[float, float]:
    """III/III* boundary in the vanishing-gap limit: (u, chi_p_f * N/j).

    The boundary root is a doubly degenerate negative real pair; in the
    delta -> 0 limit the chemical potential is the unpaired value and the
    condition reduces to a sign-split band integral.
    """
    if not 0.0 < n_c_frac < 0.5:
        raise NoRootError("vanishing-gap boundary needs 0 < N_C/N < 1/2")
    mu = math.sin(0.5 * math.pi * n_c_frac) ** 2

    def degeneracy(u):
        return _split_mean(lambda y: 4.0 * y / (u - 2.0 * y) ** 2, mu)

    lo, hi = -10.0, -1e-6
    flo, fhi = degeneracy(lo), degeneracy(hi)
    if flo * fhi > 0.0:
        raise NoRootError("no negative real double root in the search window")
    u = optimize.brentq(degeneracy, lo, hi, xtol=1e-13)
    two_over_chi_f = _split_mean(lambda y: 2.0 * y / (u - 2.0 * y), mu)
    if two_over_chi_f <= 0.0:
        raise NoRootError("vanishing-gap boundary maps to a negative coupling")
    return u, 2.0 / two_over_chi_f


def iii_star_boundary_at(chi_p_i: float, n_c_frac: float) -> tuple[float, float]:
    """General-gap III/III* boundary point: (u, chi_p_f) at given chi_p_i.

    Traces the +sqrt(-u) branch of the double-root condition with the full
    finite-gap kernel f(u) and picks the beta root that actually renders u
    doubly degenerate.
    """
    eqm = continuum_equilibrium(chi_p_i, n_c_frac)
    d, mu = eqm.delta_p0, eqm.mu

    def f_and_fp(u):
        def r_inv(y):
            return 1.0 / math.sqrt((y - mu) ** 2 + d * d * y)

        f = _gauss_mean(lambda y: 2.0 * y * r_inv(y) / (u - 2.0 * y))
        fp = _gauss_mean(lambda y: -2.0 * y * r_inv(y) / (u - 2.0 * y) ** 2)
        return f, fp

    def branch_eq(u):
        f, fp = f_and_fp(u)
        denom = f + (u - 2.0 * mu) * fp
        if denom == 0.0:
            return math.inf
        return math.sqrt(-u) + (d / math.sqrt(2.0)) * (f + 2.0 * u * fp) / denom

    us = -np.geomspace(1e-4, 10.0, 160)
    vals = np.array([branch_eq(u) for u in us])
    ok = np.isfinite(vals)
    idx = np.nonzero(np.diff(np.sign(vals[ok])) != 0)[0]
    if idx.size == 0:
        raise NoRootError(f"no III/III* double root at chi_p_i={chi_p_i}")
    uo = us[ok]
    k = idx[0]
    u = optimize.brentq(branch_eq, uo[k], uo[k + 1], xtol=1e-12)
    f, fp = f_and_fp(u)
    # beta roots of the quadratic L^2(u) = 0 at real negative u
    candidates = [f * (-(0.5 * u - mu) + s * d * math.sqrt(-0.5 * u))
                  for s in (+1.0, -1.0)]

    def dl2(beta):
        return abs(2.0 * beta * 0.0 + beta * (f + (u - 2.0 * mu) * fp)
                   + 2.0 * f * fp * ((0.5 * u - mu) ** 2 + 0.5 * d * d * u)
                   + f * f * (u - 2.0 * mu + d * d))
    # dL2/du at u with L2(u)=0; degenerate root minimizes it
    def dl2_du(beta):
        e2 = (0.5 * u - mu) ** 2 + 0.5 * d * d * u
        de2 = (0.5 * u - mu) + 0.5 * d * d
        return abs(beta * f + beta * (u - 2.0 * mu) * fp
                   + 2.0 * f * fp * e2 + f * f * de2)

    beta = min(candidates, key=dl2_du)
    chi_p_f = 2.0 / (beta + 2.0 / chi_p_i)
    if chi_p_f <= 0.0:
        raise NoRootError("III/III* boundary maps to a negative coupling")
    return u, chi_p_f


@dataclass
class PhaseBoundaries:
    """Continuum boundary curves over a window of initial couplings."""

    chi_p_i: np.ndarray
    i_ii: np.ndarray
    ii_iii: np.ndarray
    iii_star: np.ndarray
    qcp: float
    iii_onset_chi_i: float


def phase_diagram_boundaries(n_c_frac: float, chi_i_lo: float = 0.5,
                             chi_i_hi: float = 6.0,
                             n_points: int = 25) -> PhaseBoundaries:
    """Assemble the chi_d = 0 dynamical phase boundaries.

    Produces the I/II and II/III curves (NaN where the branch has no root),
    the III/III* curve, the vertical critical-coupling line, and the
    initial coupling where phase III terminates.
    """
    from .groundstate import qcp_p

    chis = np.linspace(chi_i_lo, chi_i_hi, n_points)
    i_ii = np.full(n_points, np.nan)
    ii_iii = np.full(n_points, np.nan)
    iii_star = np.full(n_points, np.nan)
    for k, chi in enumerate(chis):
        for sign, out in ((+1, i_ii), (-1, ii_iii)):
            try:
                out[k] = boundary_u0(sign, chi, n_c_frac)[2]
            except NoRootError:
                pass
        try:
            iii_star[k] = iii_star_boundary_at(chi, n_c_frac)[1]
        except NoRootError:
            pass
    return PhaseBoundaries(chi_p_i=chis, i_ii=i_ii, ii_iii=ii_iii,
                           iii_star=iii_star, qcp=qcp_p(n_c_frac),
                           iii_onset_chi_i=phase_iii_onset_coupling(n_c_frac))
