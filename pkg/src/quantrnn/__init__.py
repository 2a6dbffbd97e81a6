"""Quantization-aware training for recurrent networks.

Binary/ternary/quaternary weight quantizers with statistics-derived
thresholds, a small autograd core, LSTM/GRU/ConvLSTM cells, and the
straight-through shadow-weight training loop, plus three experiment
harnesses (digit addition, sentiment, video frame prediction).
"""

from .cells import (
    BatchNorm,
    ConvLstmCell,
    ConvLstmState,
    Dense,
    Embedding,
    GruCell,
    GruState,
    LstmCell,
    LstmState,
    Param,
    QuantContext,
    Reconstruct3d,
    RnnCell,
    straight_through,
)
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    ParseError,
    ShapeError,
    StateError,
    TrainingError,
)
from .models import FrameModel, SentimentModel, SumModel, build_model, load_model
from .quantize import (
    BINARY_CONNECT,
    FULL_PRECISION,
    LevelShape,
    QuantKind,
    QuantScheme,
    ThresholdSet,
    quantize,
    quantize_bc,
    quantize_qc,
    quantize_tc,
    quaternary_thresholds,
    ternary_thresholds,
    weight_histogram,
)
from .tensor import (
    Tensor,
    add,
    bias_add,
    conv2d_same,
    conv3d_same,
    hadamard,
    matmul,
    mean_std,
    scale,
    sigmoid,
    tanh_op,
)
from .training import (
    TrainConfig,
    Trainer,
    TrainReport,
    adam_step,
    bce_loss,
    evaluate,
    fit,
    mse_frames,
    mse_loss,
    rollout_frames,
)

__version__ = "0.1.0"
