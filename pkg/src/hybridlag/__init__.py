"""hybridlag: time-dependent hybrid Lagrangian systems.

Continuous dynamics generated by a time-dependent Lagrangian, executed
through guard-triggered resets into hybrid flows, with cyclic-coordinate
reduction, reconstruction, and momentum resequencing on top. Includes a
moving-wall billiard with a closed-form reference solution and a small
CLI for reproducible runs.
"""

from .billiard import (BilliardParams, PaperScenario, analytic_arc,
                       cartesian_hybrid, cartesian_system,
                       cartesian_to_polar, get_scenario, guard_cartesian,
                       guard_polar, paper_scenarios, polar_cyclic,
                       polar_hybrid, polar_system, polar_to_cartesian,
                       reference_flow, reset_cartesian, reset_polar,
                       routhian_closed, static_wall)
from .errors import (BracketInvalid, ChartSingularity, DirectionRejected,
                     HybridLagError, IntegrationFailure, InvalidReset,
                     InvalidStart, NegativeDiscriminant, NoConvergence,
                     NotInvariant, ParseError, SingularHessian, ZenoSuspected)
from .hybrid import (Arc, Event, Guard, HybridEquivalenceReport, HybridFlow,
                     HybridSystem, ResetMap, SimOptions,
                     check_hybrid_equivalence, locate_event, simulate)
from .lagrangian import (CoState, FlowEquivalenceReport, LagrangianSystem,
                         State, check_flow_equivalence)
from .models import MODEL_IDS, SCENARIO_IDS, ModelBundle, build_model
from .reduction import (CyclicStructure, ReconstructedFlow,
                        ReducedHybridSystem, momentum_map, project,
                        reconstruct, reduce, routhian, simulate_resequenced,
                        solve_cyclic_velocity)

__version__ = "0.1.0"

__all__ = [
    "Arc", "BilliardParams", "BracketInvalid", "ChartSingularity", "CoState",
    "CyclicStructure", "DirectionRejected", "Event", "FlowEquivalenceReport",
    "Guard", "HybridEquivalenceReport", "HybridFlow", "HybridLagError",
    "HybridSystem", "IntegrationFailure", "InvalidReset", "InvalidStart",
    "LagrangianSystem", "MODEL_IDS", "ModelBundle", "NegativeDiscriminant",
    "NoConvergence", "NotInvariant", "PaperScenario", "ParseError",
    "ReconstructedFlow", "ReducedHybridSystem", "ResetMap", "SCENARIO_IDS",
    "SimOptions", "SingularHessian", "State", "ZenoSuspected",
    "analytic_arc", "build_model", "cartesian_hybrid", "cartesian_system",
    "cartesian_to_polar", "check_flow_equivalence",
    "check_hybrid_equivalence", "get_scenario", "guard_cartesian",
    "guard_polar", "locate_event", "momentum_map", "paper_scenarios",
    "polar_cyclic", "polar_hybrid", "polar_system", "polar_to_cartesian",
    "project", "reconstruct", "reduce", "reference_flow", "reset_cartesian",
    "reset_polar", "routhian", "routhian_closed", "simulate",
    "simulate_resequenced", "solve_cyclic_velocity", "static_wall",
]
