"""Graph-based latent diffusion for multivariate time series generation."""
from .kernels import BACKEND
from .config import RunConfig
from .data import fit_normalizer, load_csv, normalize, denormalize, prepare_windows
from .spectral import build_graph, build_graphs, dft_amplitudes, detect_top_periods
from .model import LossWeights, ModelState, generate, train
from .persistence import load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "LossWeights",
    "ModelState",
    "RunConfig",
    "build_graph",
    "build_graphs",
    "denormalize",
    "detect_top_periods",
    "dft_amplitudes",
    "fit_normalizer",
    "generate",
    "load_csv",
    "load_weights",
    "normalize",
    "prepare_windows",
    "save_weights",
    "train",
]
