"""Unsupervised spectral segmentation for grayscale ultrasound-style images.

The pipeline builds a patch-affinity graph per image, oversegments it
with normalized-Laplacian spectral clustering, groups the resulting
segments across a dataset by fused appearance/shape/position
descriptors, and sharpens masks with a mean-field CRF.  Classical
superpixel baselines and the usual segmentation metrics are included
for comparison.
"""

from .affinity import (
    AffinityBuilder,
    combine,
    extract_patch_grid,
    feature_affinity,
    gaussian_kernel,
    patchwise_distance,
    position_encoding,
    positional_affinity,
)
from .baselines import FelzenszwalbSegmenter, SlicSegmenter, felzenszwalb, slic
from .cluster import kmeans
from .config import PipelineConfig, load_config
from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    DegenerateFeatureError,
    DegenerateGraphError,
    DescriptorError,
    FormatError,
    ManifestError,
    ShapeError,
    SolverError,
    SpecsegError,
)
from .io import (
    DatasetManifest,
    FeatureMap,
    ManifestEntry,
    load_image,
    load_manifest,
    load_mask,
    read_feature_map,
    read_tensor,
    save_mask,
    write_tensor,
)
from .metrics import (
    MatchResult,
    boundary_recall,
    dice,
    hungarian_match,
    label_consistency,
    majority_match,
    undersegmentation_error,
)
from .pipeline import RunResult, evaluate_run, run_baseline, run_pipeline
from .postprocess import CrfParams, crf_refine, upscale_mask
from .preprocess import Preprocessor, PreprocessSpec, equalize_histogram, gaussian_blur
from .semantic import (
    SegmentDescriptor,
    SegmentRecord,
    SemanticClusterer,
    cluster_dataset,
    extract_segments,
    fuse,
    position_embedding,
    render_semantic_mask,
    shape_embedding,
)
from .spectral import (
    SpectralDecomposition,
    SpectralOversegmenter,
    eigendecompose,
    normalized_laplacian,
    oversegment,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityBuilder",
    "CapacityError",
    "ConfigError",
    "CrfParams",
    "DataError",
    "DatasetManifest",
    "DegenerateFeatureError",
    "DegenerateGraphError",
    "DescriptorError",
    "FeatureMap",
    "FelzenszwalbSegmenter",
    "FormatError",
    "ManifestEntry",
    "ManifestError",
    "MatchResult",
    "PipelineConfig",
    "PreprocessSpec",
    "Preprocessor",
    "RunResult",
    "SegmentDescriptor",
    "SegmentRecord",
    "SemanticClusterer",
    "ShapeError",
    "SlicSegmenter",
    "SolverError",
    "SpecsegError",
    "SpectralDecomposition",
    "SpectralOversegmenter",
    "boundary_recall",
    "cluster_dataset",
    "combine",
    "crf_refine",
    "dice",
    "eigendecompose",
    "equalize_histogram",
    "evaluate_run",
    "extract_patch_grid",
    "extract_segments",
    "feature_affinity",
    "felzenszwalb",
    "fuse",
    "gaussian_blur",
    "gaussian_kernel",
    "hungarian_match",
    "kmeans",
    "label_consistency",
    "load_config",
    "load_image",
    "load_manifest",
    "load_mask",
    "majority_match",
    "normalized_laplacian",
    "oversegment",
    "patchwise_distance",
    "position_embedding",
    "position_encoding",
    "positional_affinity",
    "read_feature_map",
    "read_tensor",
    "render_semantic_mask",
    "run_baseline",
    "run_pipeline",
    "save_mask",
    "shape_embedding",
    "slic",
    "undersegmentation_error",
    "upscale_mask",
    "write_tensor",
]
