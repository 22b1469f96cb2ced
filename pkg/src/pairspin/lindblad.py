"""Dense master-equation oracle for tiny lattices (<= 4 sites).

Integrates ``d rho/dt = -i [H, rho] + D[L_p] rho + D[L_d] rho`` exactly on
the full Hilbert space, with the exchange Hamiltonian written as
``H = sum 2 j eta^2 S^z - chi_p A_p^dag A_p - chi_d A_d^dag A_d`` for the
collective operators ``A_c = sum_n c_n S^-_n``, and collective jump
operators ``L_c = sqrt(gamma_c) A_c``.  Used as the independent reference
the factorized mean-field drift is validated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SizeExceededError
from .groundstate import ModelParams
from .lattice import LatticeGrid

MAX_ORACLE_SITES = 4

_SP = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # S^+
_SZ = np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex)
_ID = np.eye(2, dtype=complex)


def _site_op(op: np.ndarray, site: int, n: int) -> np.ndarray:
    mats = [_ID] * n
    mats[site] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


@dataclass
class OracleTrace:
    times: np.ndarray
    spins: np.ndarray  # (samples, sites, 3) expectation values


def _operators(grid: LatticeGrid):
    n = grid.n_sites
    sp = [_site_op(_SP, i, n) for i in range(n)]
    sz = [_site_op(_SZ, i, n) for i in range(n)]
    return sp, sz


def _hamiltonian(params: ModelParams, grid: LatticeGrid, sp, sz):
    dim = 2**grid.n_sites
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(grid.n_sites):
        h += 2.0 * params.j * grid.eta[i] ** 2 * sz[i]
    for chi, coup in ((params.chi_p, grid.coupling_p),
                      (params.chi_d, grid.coupling_d)):
        if chi <= 0.0:
            continue
        a = sum(coup[i] * sp[i].conj().T for i in range(grid.n_sites))
        h -= chi * (a.conj().T @ a)
    return h


def product_state(spins: np.ndarray) -> np.ndarray:
    """Density matrix of a product of pure qubits given Bloch vectors of
    length 1/2."""
    rho = None
    for s in spins:
        m = 0.5 * (_ID + 2.0 * (s[0] * np.array([[0, 1], [1, 0]])
                                + s[1] * np.array([[0, -1j], [1j, 0]])
                                + s[2] * np.array([[1, 0], [0, -1]])))
        rho = m if rho is None else np.kron(rho, m)
    return rho


def exact_lindblad_oracle(spins0: np.ndarray, params: ModelParams,
                          grid: LatticeGrid, t_final: float,
                          dt: float | None = None,
                          stride: int = 10) -> OracleTrace:
    """Exact expectation trace ⟨S_n^{x,y,z}⟩(t) for a tiny lattice.

    ``spins0`` are per-site Bloch vectors (length 1/2) defining a product
    initial state.  Raises SizeExceededError above 4 sites.
    """
    n = grid.n_sites
    if n > MAX_ORACLE_SITES:
        raise SizeExceededError(f"oracle supports <= {MAX_ORACLE_SITES} sites, got {n}")
    sp, sz = _operators(grid)
    h = _hamiltonian(params, grid, sp, sz)
    jumps = []
    for gamma, coup in ((params.gamma_p, grid.coupling_p),
                        (params.gamma_d, grid.coupling_d)):
        if gamma > 0.0:
            a = sum(coup[i] * sp[i].conj().T for i in range(n))
            jumps.append(math.sqrt(gamma) * a)

    def rhs(rho):
        drho = -1j * (h @ rho - rho @ h)
        for ell in jumps:
            ld = ell.conj().T
            ldl = ld @ ell
            drho += ell @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)
        return drho

    if dt is None:
        scale = max(params.j, params.chi_p * n, params.chi_d * n,
                    params.gamma_p * n, params.gamma_d * n)
        dt = 2.0 * math.pi / (400.0 * scale)
    n_steps = max(1, int(math.ceil(t_final / dt - 1e-12)))

    rho = product_state(spins0)
    sx_ops = [sp[i] + sp[i].conj().T for i in range(n)]
    sy_ops = [-1j * (sp[i] - sp[i].conj().T) for i in range(n)]

    def measure(rho):
        out = np.empty((n, 3))
        for i in range(n):
            out[i, 0] = np.trace(rho @ sx_ops[i]).real * 0.5
            out[i, 1] = np.trace(rho @ sy_ops[i]).real * 0.5
            out[i, 2] = np.trace(rho @ sz[i]).real
        return out

    times = [0.0]
    samples = [measure(rho)]
    for k in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % stride == 0 or k == n_steps:
            times.append(k * dt)
            samples.append(measure(rho))
    return OracleTrace(times=np.asarray(times), spins=np.asarray(samples))
