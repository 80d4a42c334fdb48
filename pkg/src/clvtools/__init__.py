"""Covariant Lyapunov vectors by Ginelli's algorithm, with exact references and diagnostics."""

__version__ = "0.1.0"

from .cocycle import CocycleOrbit, ConjugatedDiagonalSpec, UlamTransferSpec  # noqa: E402
from .ginelli import CLVResult, GinelliConfig, run  # noqa: E402
from .grassmann import Subspace, grassmann_distance, orthonormalize  # noqa: E402

__all__ = [
    "__version__",
    "CocycleOrbit",
    "ConjugatedDiagonalSpec",
    "UlamTransferSpec",
    "CLVResult",
    "GinelliConfig",
    "run",
    "Subspace",
    "grassmann_distance",
    "orthonormalize",
]
