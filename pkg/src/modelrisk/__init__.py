"""Model-risk sensitivities for two-period market models.

Typical use::

    from modelrisk import BlackScholes, forward_start, sensitivity
    rep = sensitivity(forward_start(), BlackScholes(sigma=0.4), p=2, constraint="M")
    rep.value, rep.hedge("h")
"""

from .adapted import (
    adapted_martingale_hedge,
    adapted_martingale_sensitivity,
    adapted_unconstrained_sensitivity,
    marginal_hedge_and_sensitivity,
    martingale_marginal_hedge_and_sensitivity,
)
from .api import check_ordering, sensitivities, sensitivity, supported
from .criteria import (
    Linear,
    OptimalStopping,
    american_put,
    compensated_gradient,
    constant,
    criterion_value,
    expression,
    forward_start,
    gradient,
    stopping_rule,
)
from .errors import ConfigError, NumericalError
from .hedges import HedgeFunction
from .models import Bachelier, BlackScholes, Empirical, conditional_expectation, marginal_density, sample
from .problem import Problem
from .reports import SensitivityReport
from .scenarios import displacement_direction, first_order_gain, pushforward_scenario
from .wasserstein import (
    build_fredholm_system,
    direct_minimize_U_M,
    evaluate_U_M,
    fredholm_residual,
    solve_fredholm_hedge,
    wasserstein_martingale_sensitivity,
    wasserstein_unconstrained_sensitivity,
)

__version__ = "0.1.0"
