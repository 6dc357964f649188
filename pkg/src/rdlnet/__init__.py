"""Lattice-structured causal CNNs for speech enhancement.

Estimates the a priori SNR of noisy speech magnitude spectra with a
triangular-lattice convolutional network (or one of three baseline CNN
families), then enhances via MMSE-LSA or square-root Wiener gains inside
an analysis-modification-synthesis pipeline.
"""

__version__ = "0.1.0"

from .networks import NetworkConfig, NetworkModel, build_network, build_ablation_variant

__all__ = [
    "NetworkConfig",
    "NetworkModel",
    "build_network",
    "build_ablation_variant",
    "__version__",
]
