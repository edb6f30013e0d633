"""contrastprobe: a deterministic CNN inference engine plus a harness that
measures how a network's winner kernels and accuracy respond to image contrast."""

from .consistency import (
    ConsistencyReport,
    LayerMatrix,
    SweepRecord,
    aggregate_matrix,
    aggregate_table,
    build_report,
    confidence_bin,
    confidence_binned,
    consistency_matrix,
    gate_pair,
    reference_curve,
)
from .contrast import (
    ContrastLevel,
    ContrastSchedule,
    adjust_contrast,
    default_schedule,
)
from .cpm import load_model, load_model_file, save_model, save_model_file
from .dataset import DatasetEntry, DatasetIndex, decode_image, load_dataset
from .model_graph import (
    AffineParams,
    DenseParams,
    LayerNode,
    MaxPoolParams,
    ModelGraph,
    Prediction,
    Preprocess,
    default_probe_ids,
    execute,
    forward_with_taps,
    preprocess_image,
)
from .sweep import (
    LevelAccuracy,
    SweepOptions,
    SweepResult,
    accuracy_by_contrast,
    emit_reports,
    run_sweep,
)
from .tensor_ops import (
    ConvWeights,
    Tensor,
    affine_channel,
    conv2d,
    dense,
    maxpool2d,
    relu,
    softmax,
)
from .winners import WinnerMap, dump_winner_map, identical_fraction, load_winner_map, winner_map

__version__ = "0.1.0"
