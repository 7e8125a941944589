"""Laboratory for SGD step-size schedules at desk scale.

Schedules, stochastic problem instances with certified constants, projected
SGD with trajectory recording, output-selection rules, closed-form error
bounds, and a Monte-Carlo harness that fits empirical rates and checks bound
dominance.
"""

__version__ = "0.1.0"

from ._kernel import BACKEND as kernel_backend  # noqa: F401
