"""Open-system simulator for ring antennas with ratchet states feeding a trap.

The public surface is re-exported here; see the submodules for details.
"""
from .model import (BathSpec, Collective, ImperfectionSpec, RingSpec, ScenarioKind,
                    SingleSite, TrapSpec)
from .spectral import analytic_spectrum, classify_states, ring_classification
from .engine import (Liouvillian, SolverError, SteadyState, assemble_liouvillian,
                     optimize_trap_rate, photocell_metrics, steady_state)

__version__ = "0.1.0"

__all__ = [
    "BathSpec", "Collective", "ImperfectionSpec", "RingSpec", "ScenarioKind", "SingleSite",
    "TrapSpec", "analytic_spectrum", "classify_states", "ring_classification", "Liouvillian",
    "SolverError", "SteadyState", "assemble_liouvillian", "optimize_trap_rate",
    "photocell_metrics", "steady_state", "__version__",
]
