# Hydrostatic balance package
from .hydrostatic import (
    DEFAULT_CONSTANTS,
    HydrostaticState,
    PhysicalConstants,
    ProxyInputs,
    balanced_state,
    demonstrate_nonuniqueness,
    forward_thickness,
    hydrostatic_residual,
    invert_freeboard,
    parameter_table,
    proxy_target,
    proxy_target_series,
    submerged_depth,
)

__all__ = [
    'DEFAULT_CONSTANTS', 'HydrostaticState', 'PhysicalConstants', 'ProxyInputs', 'balanced_state',
    'demonstrate_nonuniqueness', 'forward_thickness', 'hydrostatic_residual', 'invert_freeboard',
    'parameter_table', 'proxy_target', 'proxy_target_series', 'submerged_depth',
]
