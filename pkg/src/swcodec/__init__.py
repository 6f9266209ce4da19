"""Low-bitrate speech codec with a simplified transformer encoder and FSQ tokens."""

from .bottleneck import FSQ, CodeGrid, FSQSpec, read_tokens, write_tokens
from .dsp import AudioBuffer, MelConfig, MelSpectrogram, griffin_lim, log_mel, multiscale_mels, stft
from .encoder import Encoder, LatentSequence, ModelConfig
from .losses import DiscriminatorBank, LossWeights
from .model import Codec
from .training import TrainConfig, Trainer

__all__ = [
    "AudioBuffer",
    "Codec",
    "CodeGrid",
    "DiscriminatorBank",
    "Encoder",
    "FSQ",
    "FSQSpec",
    "LatentSequence",
    "LossWeights",
    "MelConfig",
    "MelSpectrogram",
    "ModelConfig",
    "TrainConfig",
    "Trainer",
    "griffin_lim",
    "log_mel",
    "multiscale_mels",
    "read_tokens",
    "stft",
    "write_tokens",
]
