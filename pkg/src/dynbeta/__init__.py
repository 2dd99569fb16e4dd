"""Dynamic beta-VAE for unsupervised grouping of insect wing-beat spectra."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
