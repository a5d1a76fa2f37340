"""Channel impulse response estimation for diffusive molecular communication."""

from .channel import ChannelPrior, PhysicalParams, default_cir, design_matrix, physical_cir, prior_moments
from .estimators import (
    lmmse_estimate,
    lmmse_matrix,
    lsse_estimate,
    lsse_suboptimal,
    map_estimate,
    ml_estimate,
    ml_suboptimal,
)

__version__ = "0.1.0"
