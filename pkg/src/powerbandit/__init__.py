"""Power-constrained contextual bandits: clip-range solver, wrappers, simulators and analysis."""
from .power import Infeasible, PowerSpec, solve, solve_clip_range
from .wrappers import ClipRange

__all__ = ["ClipRange", "Infeasible", "PowerSpec", "solve", "solve_clip_range"]
__version__ = "0.1.0"
