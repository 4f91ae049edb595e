"""Bridge from pretrained torch generators to the simulator's dataset files.

Runs channel-aware inversion (power-normalized latent plus injected channel
noise inside the objective) against a loaded generator over a directory of
real images, and writes the resulting latent sequence in the simulator's
manifest + little-endian float32 dataset format.
"""

__version__ = "0.1.0"

from .export import ExportJob, export
from .models import load_generator
