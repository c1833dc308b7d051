"""Level statistics of 1-D random Schroedinger operators and their limiting SDEs."""

from .potential import (
    Coupling,
    Decaying,
    DrivingPath,
    ModelConstants,
    PotentialModel,
    PotentialShape,
    compute_constants,
    potential_at,
    resolvent_coefficient,
    sample_driving_path,
    solve_energy_for_beta,
)
from .prufer import (
    boundary_phase,
    choose_length,
    count_eigenvalues_below,
    integrate_prufer,
    locate_atoms,
    second_order_spacings,
)

__version__ = "0.1.0"
