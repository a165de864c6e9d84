"""Age-structured SIR epidemic coupled to a one-sector growth economy.

Simulation on a cohort-aligned age/time grid, welfare-target evaluation,
direct policy search, and numerical verification diagnostics (adjoint
consistency, Hamiltonian gaps, chain-rule identity, transversality).
"""

from .errors import (
    ConfigurationError,
    EpieconError,
    ExtinctPopulation,
    InfeasibleStart,
    ModelError,
    NonFiniteState,
)
from .grid import (
    AgeGrid,
    Field1D,
    Field2D,
    TimeGrid,
    constant_kernel,
    expand_blocks,
    integrate,
    integrate_kernel,
    separable_kernel,
    table_kernel,
)
from .hilbert import CostateField, HilbertSpace, SurvivalWeights
from .economy import (
    AffineLockdown,
    CESProduction,
    CobbDouglasProduction,
    ConcavePowerCongestion,
    EconParams,
    LinearCongestion,
    LinearProduction,
    PowerLockdown,
    capital_step,
    consumption_total,
    labor_supply,
    testing_cost,
)
from .epi import (
    EpiParams,
    EpiState,
    PolicyField,
    SaturationSpec,
    Trajectory,
    critical_load,
    force_of_infection,
    full_lockdown_policy,
    hilbert_space_for,
    infection_mortality,
    laissez_faire_policy,
    simulate,
    step,
)
from .objectives import (
    EvalReport,
    ObjectiveParams,
    SeparableUtility,
    ShiftedCRRAUtility,
    evaluate,
    running_reward,
    u1_reward,
    u2_reward,
    u3_deaths,
)
from .hamiltonian import (
    ControlSearchGrid,
    H1Result,
    HamiltonianEval,
    LinearValue,
    QuadraticValue,
    TransversalityReport,
    chain_rule_residual,
    fundamental_identity_residual,
    greedy_policy,
    h0_part,
    h1_part,
    hamiltonian_eval,
    hamiltonian_gap_profile,
    integrated_gap,
    maximize_h1,
    transversality_check,
    validate_gradient,
)
from .optimizer import (
    OptimReport,
    OptimizerConfig,
    PolicyBlocks,
    fd_gradient,
    optimize,
    penalized_objective,
    project,
)
from .scenario import Scenario

__version__ = "0.1.0"
