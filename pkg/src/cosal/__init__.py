"""Co-salient object detection engine and benchmark toolbox."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    CosalError,
    FeatureStack,
    LabelMask,
    ScalarMap,
    ShapeMismatchError,
    adaptive_threshold,
    binarize,
    minmax_normalize,
    resize_bilinear,
)
from .metrics import MetricScores, PRCurve, score_pair  # noqa: F401
