"""Site grids and their momentum-space view.

The 2D lattice carries one dimensionless coupling per site,
``eta_n * exp(i*phi_n) = cos(theta_x) * exp(-i*psi_y)``, which plays the
role of the momentum ``|k| e^{i phi_k}`` of a pairing problem.  Sampling
angles are deterministic uniform grids, ``theta_x[j] = 2*pi*j/n_x`` and
``psi_y[l] = 2*pi*l/n_y``; the magnitude is folded to be nonnegative by
absorbing the sign of the cosine into the phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# eta values equal within this are merged into one momentum level (cosine
# symmetry produces exact duplicates up to rounding)
LEVEL_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class LatticeGrid:
    """Deterministic 2D grid of dimensionless couplings.

    Site order is x-major: site ``n = j * n_y + l`` for x-index ``j`` and
    y-index ``l``.  Immutable after construction; safe to share across
    threads.
    """

    n_x: int
    n_y: int
    theta_x: np.ndarray
    psi_y: np.ndarray
    eta: np.ndarray
    phi: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.n_x * self.n_y

    @property
    def coupling_p(self) -> np.ndarray:
        """Per-site p-channel coupling ``eta * exp(i*phi)``."""
        return self.eta * np.exp(1j * self.phi)

    @property
    def coupling_d(self) -> np.ndarray:
        """Per-site d-channel coupling ``eta^2 * exp(2i*phi)``."""
        return self.coupling_p**2


@dataclass(frozen=True)
class LevelGrid:
    """Sorted distinct coupling magnitudes with multiplicities.

    A 1D stand-in for a lattice wherever only the distribution of ``eta``
    matters (gap equations, Lax roots): ``weight[j]`` sites share magnitude
    ``eta[j]``, with ``eta`` strictly ascending.
    """

    eta: np.ndarray
    weight: np.ndarray

    @property
    def n_sites(self) -> int:
        return int(round(self.weight.sum()))


@dataclass(frozen=True)
class MomentumGrid:
    """Momentum-space view of a lattice: eta levels x periodic phi ring.

    ``site_of[j, l]`` holds one representative lattice site for level ``j``
    and ring angle ``l`` (or -1 if no site carries that combination, which
    happens on some toy grids).  ``sites`` maps every (level, ring) cell to
    the full list of member sites; each lattice site appears exactly once.
    """

    levels: LevelGrid
    phi_ring: np.ndarray
    site_of: np.ndarray
    sites: dict = field(repr=False)

    @property
    def k_levels(self) -> np.ndarray:
        return self.levels.eta

    @property
    def weights(self) -> np.ndarray:
        return self.levels.weight

    @property
    def complete(self) -> bool:
        """True when every (level, ring) cell holds at least one site."""
        return bool(np.all(self.site_of >= 0))


# golden-ratio conjugate: rotation step of the incommensurate sampling
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def build_grid(n_x: int, n_y: int, sampling: str = "uniform") -> LatticeGrid:
    """Build the deterministic coupling grid.

    ``sampling="uniform"`` places the x angles on the equally spaced grid
    ``2*pi*j/n_x``.  ``sampling="incommensurate"`` steps them by the golden
    angle instead (``2*pi*frac(j*0.618...)``), mimicking the irrational
    per-site laser phase of the physical setup; the equally spaced grid has
    a sharp dephasing echo at ``j*t ~ n_x/2`` that the incommensurate walk
    does not, so long-horizon dynamics should use the latter.  The y angles
    stay equally spaced (they only set the phase ring).

    Requires ``n_x >= 2`` (a single x-site carries no momentum resolution)
    and ``n_y >= 1``.
    """
    if n_x < 2:
        raise ValueError(f"n_x must be >= 2, got {n_x}")
    if n_y < 1:
        raise ValueError(f"n_y must be >= 1, got {n_y}")
    if sampling == "uniform":
        theta_x = 2.0 * np.pi * np.arange(n_x) / n_x
    elif sampling == "incommensurate":
        theta_x = 2.0 * np.pi * np.mod(GOLDEN * np.arange(n_x), 1.0)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    psi_y = 2.0 * np.pi * np.arange(n_y) / n_y
    c = np.cos(theta_x)
    # fold sign(cos) into the phase so eta >= 0
    eta_x = np.abs(c)
    shift_x = np.where(c < 0.0, np.pi, 0.0)
    eta = np.repeat(eta_x, n_y)
    phi = np.mod(np.repeat(shift_x, n_y) - np.tile(psi_y, n_x), 2.0 * np.pi)
    grid = LatticeGrid(n_x=n_x, n_y=n_y, theta_x=theta_x, psi_y=psi_y,
                       eta=eta, phi=phi)
    grid.eta.setflags(write=False)
    grid.phi.setflags(write=False)
    return grid


def _merge_levels(values: np.ndarray, weights: np.ndarray) -> LevelGrid:
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    out_v = [v[0]]
    out_w = [float(w[0])]
    for vi, wi in zip(v[1:], w[1:]):
        if vi - out_v[-1] <= LEVEL_MERGE_TOL:
            out_w[-1] += wi
        else:
            out_v.append(vi)
            out_w.append(float(wi))
    return LevelGrid(eta=np.asarray(out_v), weight=np.asarray(out_w))


def level_grid(grid: LatticeGrid) -> LevelGrid:
    """Distinct eta values of a lattice, ascending, with multiplicities."""
    return _merge_levels(grid.eta, np.ones(grid.n_sites))


def uniform_level_grid(n_levels: int, j: float = 1.0) -> LevelGrid:
    """Standalone 1D grid of ``n_levels`` distinct magnitudes.

    Midpoint sampling of the quarter period, ``eta_j = cos(pi*(j+1/2)/2n)``,
    reproduces the lattice density of states while keeping every level
    distinct and away from 0 and 1.  Used by the Lax-root analysis.
    """
    if n_levels < 2:
        raise ValueError("need at least 2 levels")
    theta = 0.5 * np.pi * (np.arange(n_levels) + 0.5) / n_levels
    eta = np.sort(np.cos(theta))
    return LevelGrid(eta=eta, weight=np.ones(n_levels))


def momentum_grid(grid: LatticeGrid) -> MomentumGrid:
    """Sort a lattice into (eta level, phi ring) cells.

    The ring collects every distinct site phase in [0, 2pi); with even
    ``n_y`` the sign-folded phases land back on the same ``n_y`` angles.
    """
    levels = level_grid(grid)
    ring = np.unique(np.round(grid.phi / LEVEL_MERGE_TOL) * LEVEL_MERGE_TOL)
    # collapse near-duplicates from the rounding guard
    keep = np.concatenate(([True], np.diff(ring) > LEVEL_MERGE_TOL))
    ring = ring[keep]

    level_of_site = np.searchsorted(levels.eta, grid.eta - LEVEL_MERGE_TOL)
    ring_of_site = np.searchsorted(ring, grid.phi - LEVEL_MERGE_TOL)
    ring_of_site = np.clip(ring_of_site, 0, ring.size - 1)

    site_of = np.full((levels.eta.size, ring.size), -1, dtype=int)
    sites: dict = {}
    for n in range(grid.n_sites):
        key = (int(level_of_site[n]), int(ring_of_site[n]))
        if site_of[key] < 0:
            site_of[key] = n
        sites.setdefault(key, []).append(n)
    return MomentumGrid(levels=levels, phi_ring=ring, site_of=site_of,
                        sites=sites)


def site_weight_sums(grid: LatticeGrid | LevelGrid) -> tuple[float, float, float]:
    """Moment sums (sum eta, sum eta^2, sum eta^4) used by the gap equations."""
    eta, w = eta_weights(grid)
    return (float(w @ eta), float(w @ eta**2), float(w @ eta**4))


def eta_weights(grid: LatticeGrid | LevelGrid) -> tuple[np.ndarray, np.ndarray]:
    """(eta, weight) arrays for either grid flavor; lattice sites weigh 1."""
    if isinstance(grid, LevelGrid):
        return grid.eta, grid.weight
    return grid.eta, np.ones(grid.n_sites)
