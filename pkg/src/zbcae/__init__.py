"""Zero-bias convolutional auto-encoders with greedy layer-wise pretraining.

Layout convention throughout: activations are (batch, channels, rows, cols)
float arrays, filter banks are (out_channels, in_channels, kh, kw). Encoder
convolutions have no bias terms, which makes ReLU stacks positively
homogeneous; decoders reuse the encoder filters transposed.
"""

from zbcae._backend import active_backend, set_backend, use_backend
from zbcae.config import PRESETS, NetworkSpec
from zbcae.layers import CAEStack, Classifier, ClassifierHead, DecoderModule, EncoderModule

__all__ = [
    "CAEStack",
    "Classifier",
    "ClassifierHead",
    "DecoderModule",
    "EncoderModule",
    "NetworkSpec",
    "PRESETS",
    "active_backend",
    "set_backend",
    "use_backend",
]

__version__ = "0.1.0"
