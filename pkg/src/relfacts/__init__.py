"""Dense simulation of facts relative to a context and of their stability.

Typical use::

    from relfacts import scenarios
    named = scenarios.build("wigners-friend")
    for record in named.run():
        print(record)
"""

from __future__ import annotations

from .decoherence import (
    DecoherenceTemplate,
    EnvironmentModel,
    RelationalCheck,
    SweepRow,
    build_environment,
    decoherence_threshold,
    epsilon_sweep,
    relational_check,
)
from .errors import (
    BranchFormError,
    CapacityError,
    NoConvergenceError,
    NumericError,
    RelfactsError,
    UndefinedConditionalError,
    UsageError,
    ValidationError,
    ZeroBranchError,
)
from .facts import (
    Query,
    RelativeFact,
    Scenario,
    StabilityReport,
    StateFactor,
    WitnessResult,
    chain_probability,
    conditional_probability,
    evolve,
    outcome_probabilities,
    quantum_logic_witness,
    reduced_state,
    total_probability_audit,
)
from .registry import System, SystemRegistry, register_system
from .scenarios import (
    NamedScenario,
    ewfs_chsh,
    frauchiger_renner_structure,
    measurement_pipeline,
    spin_measurement,
    wigners_friend,
)
from .settings import Tolerances, dim_cap, override, tolerances
from .stability import (
    BranchDecomposition,
    EpsilonReport,
    EtaReport,
    branch_decompose,
    epsilon,
    epsilon_of,
    eta_report,
    reduced_pointer_state,
    stability_bound,
)
from .systems import (
    Interaction,
    Variable,
    bell_variable,
    computational_variable,
    controlled_coupling,
    premeasurement_unitary,
    product_variable,
    pvm_from_basis,
    spin_variable,
    unitary_interaction,
)
from .tensor import (
    DensityMatrix,
    StateVector,
    born_probability,
    embed,
    luders_update,
    partial_trace,
    tensor_product,
    trace_distance,
)

__version__ = "0.1.0"

