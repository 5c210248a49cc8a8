"""Complex Monge-Ampere toolkit on the unit ball with Hermitian reference forms."""

from .grid import BallGrid, BAND, EXTERIOR, INTERIOR
from .fields import (ANTI_DOWN, HOLO_DOWN, HOLO_UP, HermitianMetricField,
                     ScalarField, TensorField, interpolate)
from .geometry import (canonical_laplacian, chern_connection, complex_hessian,
                       covariant_derivative, curvature, hessian_metric,
                       lower_curvature, tensor_norm, tensor_norm2, torsion)
from .mobius import (BallAutomorphism, TranslationMap, make_automorphism,
                     make_translation, pullback_form, pullback_scalar)

__all__ = [
    "BallGrid", "BAND", "EXTERIOR", "INTERIOR",
    "ScalarField", "TensorField", "HermitianMetricField", "interpolate",
    "HOLO_UP", "HOLO_DOWN", "ANTI_DOWN",
    "complex_hessian", "chern_connection", "torsion", "curvature",
    "lower_curvature", "covariant_derivative", "tensor_norm", "tensor_norm2",
    "canonical_laplacian", "hessian_metric",
    "BallAutomorphism", "TranslationMap", "make_automorphism",
    "make_translation", "pullback_scalar", "pullback_form",
]

__version__ = "0.1.0"
