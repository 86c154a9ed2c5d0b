"""Metrics, means and stochastic models for SPD tensors, with a small heat-conduction FEM."""
from .errors import (ConvergenceError, DispersionError, MatrixOverflowError, NotRotationError,
                     NotSPDError, NotSymmetricError, NumericalError)
from .linalg import Spectrum, as_spd, as_sym, spd_exp, spd_log, spd_spectrum, sym_eig
from .means import frechet_mean, frechet_variance
from .metrics import distance, dist_scaling_rotation
from .stochastic import (OrientationModel, ReferenceTensor, ScalingModel, SymmetryClass,
                         TensorModel, sample_tensor, scenario)

__version__ = "0.1.0"
