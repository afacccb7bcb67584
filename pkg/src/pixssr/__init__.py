"""Pixel-level spectral super-resolution from RGB and sparse point spectra."""
from .config import RunConfig
from .network import BACKBONES, Backbone, ModelConfig, PixelSSR, attach_backbone, build_model, register_backbone

__version__ = "0.1.0"

__all__ = ["BACKBONES", "Backbone", "ModelConfig", "PixelSSR", "RunConfig", "attach_backbone", "build_model",
           "register_backbone", "__version__"]
