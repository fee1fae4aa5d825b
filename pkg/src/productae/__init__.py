"""Product autoencoders: neural product channel codes trained over AWGN."""

from .channel import (
    AwgnChannel,
    ChannelParams,
    ebn0_db_from_snr_db,
    power_normalize,
    q_function,
    snr_db_from_ebn0_db,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, load_preset
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    EnumerationLimitError,
    ProductAEError,
)
from .evaluation import EvalResult, UncodedBpsk, monte_carlo_eval, sweep, uncoded_bpsk_ber
from .model import Architecture, ProductAE, ProductDecoder, ProductEncoder
from .nn import Adam, Fcnn, init_weights
from .tensor import Tensor, no_grad
from .training import FinetuneConfig, Trainer, TrainingConfig, large_batch_finetune

__version__ = "0.1.0"
