from .codebook import (
    Codebook,
    build_codebook,
    frame_descriptors,
    load_codebook,
    patch_descriptor,
    quantize,
    save_codebook,
)
from .extract import extract_targets
from .kinds import REGRESSION_LOSSES, TargetKind, TargetTensor, masked_positions, target_dim
from .lowlevel import (
    hog_cell_histograms,
    hog_map,
    normalize_histograms,
    target_depth,
    target_flow,
    target_hog,
    target_pixel,
    to_gray,
)
from .teacher import Teacher, load_teacher, make_frozen_teacher, save_teacher, target_teacher

__all__ = [
    "Codebook",
    "REGRESSION_LOSSES",
    "TargetKind",
    "TargetTensor",
    "Teacher",
    "build_codebook",
    "extract_targets",
    "frame_descriptors",
    "hog_cell_histograms",
    "hog_map",
    "load_codebook",
    "load_teacher",
    "make_frozen_teacher",
    "masked_positions",
    "normalize_histograms",
    "patch_descriptor",
    "quantize",
    "save_codebook",
    "save_teacher",
    "target_depth",
    "target_dim",
    "target_flow",
    "target_hog",
    "target_pixel",
    "target_teacher",
    "to_gray",
]
