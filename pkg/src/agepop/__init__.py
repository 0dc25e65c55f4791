"""Age-structured predator-prey control toolkit.

Core layers:

- :mod:`agepop.grids` -- age grids, trapezoid quadrature, profile families
- :mod:`agepop.operators` -- implicit growth-rate root and the explicit gains
- :mod:`agepop.equilibrium` -- target-equilibrium synthesis
- :mod:`agepop.control` -- nominal / perturbed dilution laws, error ledger
- :mod:`agepop.dynamics` -- reduced-ODE and transport-PDE simulation
- :mod:`agepop.robustness` -- certified level sets and perturbation bounds
- :mod:`agepop.adaptive` -- online fertility / mortality estimation
- :mod:`agepop.surrogate` -- dataset export and portable model inference
- :mod:`agepop.cli` -- command-line front end
"""

from .errors import (
    AgepopError,
    BlowupError,
    CertificateError,
    ConvergenceError,
    DomainError,
    ExtinctionError,
    SetpointError,
    ShapeError,
)
from .grids import (
    AgeGrid,
    AgeProfile,
    ClassBounds,
    DEFAULT_GRID,
    FamilyParams,
    cumulative_integral,
    integrate,
    net_reproduction_number,
    sample_family,
    sample_family_params,
    survival,
)
from .operators import (
    GrowthRateRoot,
    LipschitzBounds,
    generation_time,
    growth_rate_bounds,
    growth_rate_lipschitz_bounds,
    interaction_gain,
    lotka_sharpe_integral,
    reproductive_value,
    solve_growth_rate,
    stable_profile,
)
from .equilibrium import (
    EquilibriumSpec,
    SpeciesSpec,
    build_equilibrium,
    build_species,
    equilibrium_scalars,
    setpoint_for_dilution,
)
from .control import (
    ControllerConfig,
    LogDeviations,
    PerturbationLedger,
    clamp_dilution,
    hatted_quantities,
    log_deviations_from_state,
    u_approx,
    u_nominal,
    zero_ledger,
)
from .dynamics import (
    EtaTrajectory,
    LyapunovQuantities,
    PdeTrajectory,
    PopulationState,
    integrate_eta,
    lyapunov_quantities,
    lyapunov_value,
    manifold_state,
    pde_step,
    radial_measure,
    restoring_terms,
    simulate_closed_loop_pde,
)

__version__ = "0.1.0"
