"""Image dataset to feature-tensor exporter."""

from .backbone import build_backbone, tap_features
from .errors import ExportError
from .pipeline import ExportSpec, collect_items, export_dataset, load_mask, \
    preprocess_image
from .tensor_out import write_tensor

__all__ = [
    "ExportError", "ExportSpec", "build_backbone", "collect_items",
    "export_dataset", "load_mask", "preprocess_image", "tap_features",
    "write_tensor",
]
