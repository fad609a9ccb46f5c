"""Hot numeric kernels, dispatched to numba or numpy per ``FINPOP_BACKEND``."""

from ._backend import BACKEND

if BACKEND == "numba":
    from . import _kernels_numba as _impl
else:
    from . import _kernels_numpy as _impl

log_pmf = _impl.log_pmf
log_pmf_array = _impl.log_pmf_array
log_upper_tail = _impl.log_upper_tail
log_lower_tail = _impl.log_lower_tail
stage_limits = _impl.stage_limits
stop_dp_float = _impl.stop_dp_float
prefix_sequential = _impl.prefix_sequential
prefix_fisher_yates = _impl.prefix_fisher_yates
philox_uniforms = _impl.philox_uniforms

__all__ = [
    "BACKEND",
    "log_pmf",
    "log_pmf_array",
    "log_upper_tail",
    "log_lower_tail",
    "stage_limits",
    "stop_dp_float",
    "prefix_sequential",
    "prefix_fisher_yates",
    "philox_uniforms",
]
