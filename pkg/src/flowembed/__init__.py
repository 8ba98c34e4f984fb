"""Interpolating vector fields for near-identity maps via discrete averaging.

A near-identity map ``f`` is approximated by the time-one map of the
autonomous field ``X_m = sum_k (-1)**(k-1)/k Delta_k`` built from forward
differences of its orbit. The subpackages compute these fields, integrate
them, and measure the embedding error against explicit bounds.
"""

__version__ = "0.1.0"

from .averaging import (
    InterpField,
    OrderPlan,
    delta,
    delta_binomial,
    delta_from_first_differences,
    differences,
    difference_norm_estimate,
    field_eval,
    field_norm_estimate,
    plan_order,
)
from .certify import (
    ErrorReport,
    LieCheck,
    OrderEstimate,
    SlopeFit,
    best_order,
    default_mu_grid,
    embedding_error,
    epsilon_for_exponential_bound,
    epsilon_slope_check,
    epsilon_used,
    exponential_bound,
    lie_coefficient,
    lie_vs_field_taylor,
    measure_error,
    mu_order_check,
    order_sweep,
    theoretical_bound,
)
from .flow import FlowResult, IntegratorConfig, flow, flow_time_one, flow_time_one_verified
from .maps import (
    Domain,
    EulerStep,
    Identity,
    LinearScalar,
    MuFamily,
    SampleGrid,
    StdSymplectic,
    Translation,
    estimate_epsilon,
    evaluate,
    iterate,
)
