"""BinGAN: regularized GAN training for compact binary image descriptors."""

from .losses import LossBreakdown, RegularizerConfig
from .quantize import BitMatrix
from .tensor import Tensor
from .train import Checkpoint, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "BitMatrix",
    "Checkpoint",
    "LossBreakdown",
    "RegularizerConfig",
    "Tensor",
    "TrainConfig",
    "__version__",
]
