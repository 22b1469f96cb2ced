"""Mean-field simulator for competing chiral pairing channels on
cavity-coupled pseudospin lattices."""

from .lattice import (LatticeGrid, LevelGrid, MomentumGrid, build_grid,
                      level_grid, momentum_grid, site_weight_sums,
                      uniform_level_grid)
from .groundstate import (MFSolution, ModelParams, chern_discrete,
                          chern_equilibrium, chern_from_state, ground_branch,
                          mf_energy, qcp_d, qcp_p, solve_d, solve_mixed,
                          solve_normal, solve_p, texture_from_solution)

__all__ = [
    "LatticeGrid", "LevelGrid", "MomentumGrid", "build_grid", "level_grid",
    "momentum_grid", "site_weight_sums", "uniform_level_grid",
    "MFSolution", "ModelParams", "chern_discrete", "chern_equilibrium",
    "chern_from_state", "ground_branch", "mf_energy", "qcp_d", "qcp_p",
    "solve_d", "solve_mixed", "solve_normal", "solve_p",
    "texture_from_solution",
]
