"""homog sim - perforated-medium geometry, cell problems, micro and two-scale solvers, corrector checks."""

from homog_sim.cell import (
    CellSolution,
    EffectiveTable,
    build_table,
    cell_energy,
    effective_tensor,
    read_table,
    solve_cell,
    write_table,
)
from homog_sim.correctors import (
    LadderError,
    RateReport,
    RateRow,
    Reconstruction,
    corrector_norms,
    initial_reconstruction,
    rate_fit,
    reconstruct,
    reconstruct_trajectory,
    run_ladder,
)
from homog_sim.geometry import (
    CutoffField,
    Grid,
    LevelSetSpec,
    MediumGeometry,
    Phase,
    build_cutoff,
    build_medium,
    classify_point,
    cutoff_norms,
    dump_geometry,
    interface_measure,
    interface_point,
    normal_expansion,
    phase_components,
)
from homog_sim.lemmas import (
    TableCellField,
    check_boundary_strip,
    check_cutoff_scaling,
    check_oscillating_pair,
    check_transport_identity,
    transport_identity_study,
)
from homog_sim.microsim import (
    MicroConfig,
    MicroState,
    check_assumptions,
    energy_history,
    run_micro,
    step_micro,
)
from homog_sim.numerics import (
    SolverError,
    SolveStats,
    SparseSystem,
    bicgstab_solve,
    cg_solve,
    implicit_euler_step,
    solve,
)
from homog_sim.presets import (
    BoundaryData,
    Presets,
    Radius,
    SampleField,
    Velocity,
    parse_radius,
    parse_velocity,
    property_rng,
)
from homog_sim.twoscale import (
    MacroGrid,
    TwoScaleConfig,
    TwoScaleState,
    build_macro_grid,
    mass_balance,
    run_twoscale,
    step_twoscale,
)

__version__ = "0.1.0"

__all__ = [
    # geometry
    "Phase",
    "LevelSetSpec",
    "Grid",
    "MediumGeometry",
    "CutoffField",
    "build_medium",
    "build_cutoff",
    "cutoff_norms",
    "classify_point",
    "phase_components",
    "interface_measure",
    "interface_point",
    "normal_expansion",
    "dump_geometry",
    # numerics
    "SparseSystem",
    "SolveStats",
    "SolverError",
    "cg_solve",
    "bicgstab_solve",
    "solve",
    "implicit_euler_step",
    # cell
    "CellSolution",
    "EffectiveTable",
    "solve_cell",
    "effective_tensor",
    "cell_energy",
    "build_table",
    "write_table",
    "read_table",
    # micro / two-scale
    "MicroConfig",
    "MicroState",
    "run_micro",
    "step_micro",
    "energy_history",
    "check_assumptions",
    "TwoScaleConfig",
    "TwoScaleState",
    "MacroGrid",
    "build_macro_grid",
    "run_twoscale",
    "step_twoscale",
    "mass_balance",
    # correctors
    "Reconstruction",
    "RateRow",
    "RateReport",
    "LadderError",
    "reconstruct",
    "reconstruct_trajectory",
    "initial_reconstruction",
    "corrector_norms",
    "rate_fit",
    "run_ladder",
    "TableCellField",
    "check_transport_identity",
    "transport_identity_study",
    "check_oscillating_pair",
    "check_boundary_strip",
    "check_cutoff_scaling",
    # presets
    "Radius",
    "SampleField",
    "Velocity",
    "BoundaryData",
    "Presets",
    "parse_radius",
    "parse_velocity",
    "property_rng",
    "__version__",
]
