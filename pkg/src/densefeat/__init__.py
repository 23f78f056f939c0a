"""Dense local-feature detectors, SIFT description, VLAD encoding and a
retrieval evaluation harness."""

from .core import NeighborhoodKind, ScaleStack, build_scale_stack, load_image, local_extrema, to_grayscale
from .descriptor import DescriptorSet, PcaModel, describe, extract_patch, l2_filter, patch_to_scale, rootsift, sift
from .encoding import Codebook, kmeans_train, l2_normalize, power_law, vlad_encode
from .keypoints import Keypoint, read_keypoints, write_keypoints
from .pipeline import Config, ConfigError, InputError, load_config

__version__ = "0.1.0"

__all__ = [
    "Codebook",
    "Config",
    "ConfigError",
    "DescriptorSet",
    "InputError",
    "Keypoint",
    "NeighborhoodKind",
    "PcaModel",
    "ScaleStack",
    "build_scale_stack",
    "describe",
    "extract_patch",
    "kmeans_train",
    "l2_filter",
    "l2_normalize",
    "load_config",
    "load_image",
    "local_extrema",
    "patch_to_scale",
    "power_law",
    "read_keypoints",
    "rootsift",
    "sift",
    "to_grayscale",
    "vlad_encode",
    "write_keypoints",
]
