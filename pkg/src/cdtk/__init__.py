"""cdtk: correlation-distillation change detection at desk scale."""

__version__ = "0.1.0"

from .tensor import Tensor, backward
from .gradcheck import gradcheck
from .network import ChangeDetector, ModelConfig
from .distill import LossWeights, MemoryBank
from .trainconfig import TrainConfig

__all__ = ["Tensor", "backward", "gradcheck", "ChangeDetector", "ModelConfig",
           "LossWeights", "MemoryBank", "TrainConfig", "__version__"]
