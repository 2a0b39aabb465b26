"""Pseudo-spectral Lagrangian solver for viscoelastic flow on the periodic 3-torus."""

__version__ = "0.1.0"

from .errors import (ConfigError, NoConvergence, OracleFailure, SingularMap,  # noqa: E402
                     StepRejected, ViscoError)
from .spectral import Field, Grid  # noqa: E402

__all__ = ["Field", "Grid", "ViscoError", "ConfigError", "SingularMap", "NoConvergence",
           "StepRejected", "OracleFailure", "__version__"]
