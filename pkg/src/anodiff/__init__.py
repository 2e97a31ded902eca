"""anodiff: Monte Carlo laboratory for anomalous diffusion.

Simulates a test particle coupled to N heterogeneous Brownian bath particles,
samples the corresponding large-N Gaussian / conditionally-Gaussian limits
exactly, and provides estimators and a spectral density solver to confront
the two numerically.
"""

__version__ = "0.1.0"

from . import params
from . import mass_laws
from . import limit_gauss
from . import particle_sim
from . import superstat
from . import kfp
from . import stats

__all__ = [
    "params",
    "mass_laws",
    "limit_gauss",
    "particle_sim",
    "superstat",
    "kfp",
    "stats",
    "__version__",
]
