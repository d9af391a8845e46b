"""Design-based inference for weighted empirical distribution functions.

Single-stage unequal-probability sampling designs with exact inclusion
probabilities, inverse-probability and self-normalized weighted empirical
CDFs with their standardized processes, small-population enumeration
oracles, closed-form limit covariances including poverty-rate variances,
and a reproducible Monte Carlo harness with a command line front end.
"""

__version__ = "0.1.0"

from . import asymptotics, designs, estimation, montecarlo, oracle, population, streams
from .errors import SvycdfError

__all__ = [
    "__version__",
    "SvycdfError",
    "asymptotics",
    "designs",
    "estimation",
    "montecarlo",
    "oracle",
    "population",
    "streams",
]
