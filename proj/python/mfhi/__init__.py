"""Modality-free human identification engine."""

from ._core import (
    MfhiError,
    category_attribute,
    dcm_probability,
    evaluate,
    generate_synthetic,
    metric_cmc,
    metric_map,
    read_tensor,
    train,
    visual_feature,
    write_tensor,
    __version__,
)

__all__ = [
    "MfhiError",
    "category_attribute",
    "dcm_probability",
    "evaluate",
    "generate_synthetic",
    "metric_cmc",
    "metric_map",
    "read_tensor",
    "train",
    "visual_feature",
    "write_tensor",
    "__version__",
]
