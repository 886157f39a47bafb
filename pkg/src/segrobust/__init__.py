"""Segmentation robustness toolkit.

Label-painting augmentation (alpha-blending images with colorized label maps),
a 16-kind corruption benchmark with frozen severity parameters, class-level
texture ablations, segmentation metrics with SNR-based severity exclusion, and
a desk-scale paired training experiment on synthetic shapes.

Numerical hot paths run as compiled kernels when numba is available; set
``SEGROBUST_NUMBA=0`` to force the pure-numpy fallback lane.
"""

from .ablate import (
    ABLATION_MODES,
    AblationSpec,
    ablate_class_blur,
    ablate_class_mean,
    ablate_class_noise,
    ablate_silhouette,
    apply_ablation,
    generate_ablation_suite,
)
from .corrupt import (
    CORRUPTION_FAMILIES,
    CORRUPTION_KINDS,
    STOCHASTIC_KINDS,
    apply_corruption,
    generate_corrupted_dataset,
    load_severity_params,
)
from .errors import (
    AllPixelsIgnoredError,
    DecodeError,
    DimensionMismatchError,
    DivergedLossError,
    EmptyBatchError,
    EmptyDatasetError,
    IdOutOfRangeError,
    InconsistentInstanceMapError,
    MissingClassStatsError,
    MissingResultsError,
    NoEvaluableClassesError,
    SegRobustError,
    SeverityOutOfRangeError,
    UnpairedSampleError,
    UnsupportedFormatError,
)
from .imagecore import (
    DatasetIndex,
    Image,
    InstanceMap,
    LabelMap,
    Sample,
    index_dataset,
    index_from_manifest,
    index_to_manifest,
    load_image,
    load_instance_map,
    load_label_map,
    save_image,
    save_label_map,
)
from .kernels import USING_NUMBA
from .metrics import (
    BenchmarkReport,
    ConfusionMatrix,
    accumulate_confusion,
    aggregate_benchmark,
    format_benchmark_table,
    iou_per_class,
    mean_iou,
    psnr,
    sensitivity_per_class,
    snr,
    write_benchmark_csv,
)
from .paint import (
    ALPHA_PRESETS,
    AugmentedBatch,
    AugmentedItem,
    BlendConfig,
    ClassColorStats,
    Palette,
    alpha_blend,
    augment_batch,
    compute_class_color_stats,
    render_instance_painting,
    render_painting,
    render_stat_painting,
    sample_alpha,
    sample_palette,
)
from .seeding import derive_seed, make_rng
from .toyseg import (
    ShapesConfig,
    TinyFCN,
    TrainConfig,
    evaluate_robustness,
    forward,
    generate_shapes_dataset,
    init_model,
    load_model,
    loss_and_grad,
    predict,
    run_paired_experiment,
    save_model,
    standard_experiment_config,
    train,
)

__version__ = "0.1.0"
