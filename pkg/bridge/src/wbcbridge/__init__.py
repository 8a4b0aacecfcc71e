"""Tensor bridge: pretrained detector -> .wbct interchange files."""

from .export import BridgeConfig, BridgeError, export_tensors, letterbox_image, run_model
from .wbct import write_wbct

__all__ = [
    "BridgeConfig",
    "BridgeError",
    "export_tensors",
    "letterbox_image",
    "run_model",
    "write_wbct",
]
