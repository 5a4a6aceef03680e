"""Target speaker extraction with dual-stream contextual fusion, on a small numpy autodiff engine."""

from .autograd import GraphConsumedError, NonFiniteError, Tensor, no_grad
from .config import ModelConfig, RunConfig, TrainConfig, preset
from .metrics import EvalReport, sdr, si_sdr, si_sdr_loss, tcp_rate
from .model import DCFNet

__version__ = "0.1.0"

__all__ = [
    "DCFNet",
    "EvalReport",
    "GraphConsumedError",
    "ModelConfig",
    "NonFiniteError",
    "RunConfig",
    "Tensor",
    "TrainConfig",
    "no_grad",
    "preset",
    "sdr",
    "si_sdr",
    "si_sdr_loss",
    "tcp_rate",
]
