"""Monte Carlo verification of functional inequalities for reflected SDEs
and SDEs with local time.

Modules: ``model`` (domains, coefficients, measures, Le Gall transform),
``simulate`` (schemes and couplings), ``transport`` (Wasserstein distances
and statistics), ``verify`` (the checks) and ``cli`` (config-driven runner).
"""
from .errors import (ConfigurationError, ModelError, RsdeError, SimulationBlowup,
                     StatisticsError)
from .model import (Affine, Callback, CoefficientSpec, Constant, ConvexDomain, LeGallTransform,
                    Piecewise, SignedMeasure, build_transform, eval_f_nu, transform_coefficients)
from .simulate import RhoSpec, TimeGrid, make_noise
from .verify import ExperimentReport

__version__ = "0.1.0"
