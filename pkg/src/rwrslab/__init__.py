"""Random walk in random scenery: simulation and verification laboratory.

Submodules: ``scenery`` (tail laws), ``walk`` (lattice walks and local
times), ``rates`` (scale functions and theorem constants), ``estimators``
(rare-event Monte Carlo), ``oracle`` (exact small-scale references),
``cli`` (batch driver).
"""

__version__ = "0.1.0"

from . import estimators, oracle, rates, scenery, walk  # noqa: F401
