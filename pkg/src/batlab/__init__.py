"""batlab: a numerical laboratory for covariant Bateman-type field equations.

Builds exact and approximate solution families (implicit constraints,
hodograph parametrisations, Born-Infeld gradient fields, zero-curvature
constructions, characteristic integration) and verifies every residual
identity, covariance property and conservation law to quantified tolerance.
"""

from .jets import JET_BACKEND

__version__ = "0.1.0"

__all__ = ["JET_BACKEND", "__version__"]
