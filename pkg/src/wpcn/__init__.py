"""Sum-rate optimal power and time allocation for wireless powered
communication networks whose energy harvesters saturate."""

__version__ = "0.1.0"

from .allocator import (BASELINE1, BASELINE2, SCHEMES, THEOREM1, THEOREM2, ChannelBatch,
                        EpochAllocation, EpochChannel, NetworkConfig, allocate_batch,
                        allocate_theorem1, allocate_theorem2, find_lambda, prepare_batch)
from .eh_model import EhCurve, EhuProfile, fit_piecewise
from .simulator import FadingSpec, generate_epochs, run_scheme, run_sweep
