"""Volume-preserving flow of convex bodies by powers of E_k, in support-function form."""
from .algebra import SpeedLaw, elem_sym, norm_sym, speed, speed_grad
from .body import Backend, SupportField, make_body
from .flow import FlowConfig, FlowState, run, step

__version__ = "0.1.0"

__all__ = [
    "SpeedLaw", "elem_sym", "norm_sym", "speed", "speed_grad",
    "Backend", "SupportField", "make_body",
    "FlowConfig", "FlowState", "run", "step",
]
