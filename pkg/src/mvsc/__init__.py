"""Multi-view sparse coding over Gabor point features.

The pipeline: sample Gabor kernel responses at annotated landmarks,
split the features into views (by face region or by kernel
orientation), learn per-view dictionaries with one shared sparse code
matrix under row-max penalties, and classify the codes with least
squares or a linear SVM.
"""

__version__ = "1.0.0"

from .classify import (
    LeastSquaresClassifier,
    LinearSVMClassifier,
    RecognitionReport,
    format_confusion,
    format_report_table,
    parse_report_csv,
    recognition_report,
)
from .data import (
    EXPRESSIONS,
    ManifestEntry,
    ModelArchive,
    MultiViewFeatureMatrix,
    SplitSpec,
    SyntheticSpec,
    generate_synthetic,
    labels_for_task,
    load_annotation,
    load_features,
    load_image,
    load_labels,
    load_manifest,
    load_model,
    load_synthetic_truth,
    save_features,
    save_labels,
    save_model,
    save_synthetic_truth,
    split_dataset,
    split_labeled,
)
from .errors import (
    DataError,
    DegenerateInputError,
    DimensionError,
    MvscError,
    NumericError,
    ParameterError,
    ProtocolError,
)
from .gabor import (
    REGIONS,
    FeatureLayout,
    FeatureStats,
    FeatureVector,
    FiducialMask,
    GaborBank,
    GaborFeatureTransformer,
    GaborKernel,
    GaborParams,
    apply_feature_stats,
    build_bank,
    build_kernel,
    extract_features,
    fit_feature_stats,
    merge_orientation_views,
    merge_region_views,
    normalize_features,
    partition_by_orientation,
    partition_by_region,
)
from .prox import (
    ProxResult,
    norm_l1inf,
    project_l1_ball,
    prox_l1inf_rows,
    prox_linf,
)
from .solver import (
    DictionarySet,
    InnerTrace,
    MultiViewSparseCoder,
    ObjectiveBreakdown,
    SolverConfig,
    SolverTrace,
    code_gradient,
    dict_gradient,
    encode,
    fit,
    objective,
    solve_codes,
    solve_dictionary,
    spectral_norm_sq,
)

__all__ = [
    "__version__",
    # errors
    "MvscError",
    "ParameterError",
    "DimensionError",
    "NumericError",
    "DegenerateInputError",
    "DataError",
    "ProtocolError",
    # prox
    "ProxResult",
    "norm_l1inf",
    "project_l1_ball",
    "prox_linf",
    "prox_l1inf_rows",
    # gabor
    "REGIONS",
    "GaborParams",
    "GaborKernel",
    "GaborBank",
    "FiducialMask",
    "FeatureLayout",
    "FeatureVector",
    "FeatureStats",
    "build_bank",
    "build_kernel",
    "extract_features",
    "partition_by_orientation",
    "merge_orientation_views",
    "partition_by_region",
    "merge_region_views",
    "normalize_features",
    "fit_feature_stats",
    "apply_feature_stats",
    "GaborFeatureTransformer",
    # solver
    "SolverConfig",
    "DictionarySet",
    "ObjectiveBreakdown",
    "InnerTrace",
    "SolverTrace",
    "objective",
    "spectral_norm_sq",
    "code_gradient",
    "dict_gradient",
    "solve_codes",
    "solve_dictionary",
    "fit",
    "encode",
    "MultiViewSparseCoder",
    # classify
    "LeastSquaresClassifier",
    "LinearSVMClassifier",
    "RecognitionReport",
    "recognition_report",
    "format_report_table",
    "parse_report_csv",
    "format_confusion",
    # data
    "EXPRESSIONS",
    "ManifestEntry",
    "load_manifest",
    "labels_for_task",
    "load_image",
    "load_annotation",
    "load_labels",
    "save_labels",
    "MultiViewFeatureMatrix",
    "save_features",
    "load_features",
    "SplitSpec",
    "split_dataset",
    "split_labeled",
    "SyntheticSpec",
    "generate_synthetic",
    "save_synthetic_truth",
    "load_synthetic_truth",
    "ModelArchive",
    "save_model",
    "load_model",
]
