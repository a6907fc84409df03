"""Neural hand perception at desk scale.

Gabor-jet features and Local Linear Map networks drive a two-level fingertip
detector on synthetic hand renders; per-finger PSOM manifolds turn 2D tips
into joint angles and depth. A feature-map attention engine and a grasp
state machine over a simulated finger plant complete the package.
"""

from neurohand.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
