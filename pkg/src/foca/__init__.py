"""Feature extraction trained against freshly resampled weak classifiers.

The trainers decouple the feature extractor from the classifier: every
iteration fits a throwaway weak classifier on a small class-covering batch of
frozen features, then updates only the extractor through it. Analysis tools
quantify the resulting drop in classifier/feature co-adaptation (scatter
compactness, partial-data retraining curves, Fisher-metric path lengths,
discriminant eigenvalues).
"""

__version__ = "0.1.0"

from foca.nn_core import (
    Activation,
    LayerSpec,
    LossKind,
    NetworkParams,
    OptimizerState,
)

__all__ = [
    "Activation",
    "LayerSpec",
    "LossKind",
    "NetworkParams",
    "OptimizerState",
    "__version__",
]
