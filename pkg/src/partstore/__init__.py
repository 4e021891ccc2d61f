"""Password-recoverable, partitioned key storage with peer-held secret shares."""

from .crypto import FastBackend, ProductionBackend, get_backend
from .errors import PartstoreError
from .sharing import Share, ThresholdSpec, compute_threshold, reconstruct, split, split_rates

__version__ = "0.1.0"

__all__ = [
    "FastBackend",
    "PartstoreError",
    "ProductionBackend",
    "Share",
    "ThresholdSpec",
    "compute_threshold",
    "get_backend",
    "reconstruct",
    "split",
    "split_rates",
]
