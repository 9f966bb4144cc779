"""RGB-D depth-denoising dataset toolkit.

Turns paired lower-/higher-quality RGB-D captures into an aligned, masked,
augmented training dataset, with classical denoising baselines and masked
evaluation metrics.
"""

__version__ = "0.1.0"

from .augmentation import AugmentPolicy, augment_tuple, sample_transform
from .baselines import BilateralParams, RollingGuidanceParams, bilateral, joint_bilateral, rolling_guidance
from .calibration import CalibrationResult, CorrespondenceSet, align_tuple, solve_extrinsic
from .dataset_io import Dataset, DatasetManifest, FrameTuple, TupleState, split_dataset
from .errors import (
    ConfigurationError,
    EstimationError,
    GeometryError,
    IntegrityError,
    MigrationError,
    PipelineError,
)
from .geometry import Intrinsics, PointCloud, RigidTransform, apply_transform, compose, reproject, unproject
from .masking import (
    ClusterLabeling,
    CropBox,
    MaskingParams,
    build_mask,
    dbscan,
    estimate_normals,
    filter_clusters,
    region_grow,
    reject_surface_clusters,
)
from .metrics import MetricsReport, binned_l1, evaluate_split, it_ot, masked_l1, masked_mse
