"""Cache-enabled semantic communication simulator.

Latent vectors extracted by inverting a differentiable generator are sent
over a simulated AWGN channel; synchronized transmitter/receiver caches
replace recurring vectors with short indices, and the accounting layer
tracks the resulting bandwidth compression ratio and reconstruction
quality as the cache fills over an image sequence.
"""

__version__ = "0.1.0"

from .accounting import SideChannelModel, TransmissionRecord, bcr, index_cost_symbols, psnr
from .channel import ChannelConfig, noise_variance, transmit
from .generator import FeatureExtractor, GeneratorModel, make_linear, make_mlp
from .inversion import InversionConfig, InversionResult, invert
from .latent import (
    ComplexBlock,
    Image,
    SemanticLatent,
    pack_real_to_complex,
    power_normalize,
    unpack_complex_to_real,
)
from .semcache import (
    CacheMemory,
    ProtocolDesyncError,
    ThresholdProfile,
    TransmissionPlan,
    cosine,
    lookup,
    plan_transmission,
    rx_reconstruct,
    tx_update,
)
from .simpipeline import (
    SequenceRunner,
    SimulationConfig,
    SyntheticSourceSpec,
    run_sequence,
)
