"""Two-dimensional Rayleigh-Benard convection between Navier-slip walls."""
from .grid import Domain, ScalarField, VectorField
from .solver import (
    FlowState,
    InitialCondition,
    Integrator,
    PhysParams,
    Schedule,
    conduction_state,
    default_initial_condition,
    recover_pressure,
    run,
)
from .bounds import bound_value, delta_optimal, region_classify

__version__ = "0.1.0"
