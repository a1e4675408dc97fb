"""LWR traffic flow on corridors and rings with capacity-drop bottlenecks."""

from .flux import (
    CapacityDrop,
    ExternalDemand,
    ExternalSupply,
    MergeCapacityDrop,
    NodeModel,
    Standard,
    capdrop_flux,
    merge_capdrop_flux,
    standard_flux,
)
from .fundamental import DemandSupplyState, DomainError, FundamentalDiagram, InvalidStateError, TriangularFD
from .riemann import RiemannSolution, WaveDescriptor, entropy_oracle, solve_riemann, solve_riemann_densities
from .sim import Corridor, Link, RecordSpec, SimulationFault, SimulationRecord, SimulationState, advance, run, step

__version__ = "0.1.0"
