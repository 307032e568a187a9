"""Stochastically forced kinetic equations and their diffusion limit.

Subpackages cover the periodic-field calculus (`torus`), the mixing force
fields (`forcing`), the particle engine and its verification oracles
(`kinetic`, `equilibrium`, `duhamel`), the limit-equation data
(`coefficients`), the limit SPDE solver (`spde`), and experiment
orchestration (`config`, `cli`).
"""

__version__ = "0.1.0"

from .torus import (TorusField, TorusGrid, divergence, gradient, laplacian,
                    pairing, sobolev_norm)

__all__ = [
    "TorusField",
    "TorusGrid",
    "divergence",
    "gradient",
    "laplacian",
    "pairing",
    "sobolev_norm",
    "__version__",
]
