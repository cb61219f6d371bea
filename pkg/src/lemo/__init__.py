"""Online anomaly detection with a learnable prototype memory bank.

Frames stream through a small learned projection and are matched against K
prototypes; both are trained jointly, one frame at a time, with no stored
history.  See the engine module for the streaming loop and the cli module
for the command-line entry points.
"""

from .anonce import AdamHyper, LossConfig, adam_step, anonce_loss
from .engine import (EngineConfig, EngineState, StreamReport, bootstrap, detect,
                     run_stream, train_step)
from .errors import (ConfigError, InsufficientPointsError, LemoError,
                     MetricUndefinedError, NumericalError, ShapeError,
                     TensorFormatError)
from .evaluator import (DriftOutcome, EvalResult, ManifestStreamSpec,
                        SynthStreamSpec, aupro, auroc, evaluate_state,
                        run_ablation_grid, run_drift_experiment)
from .feature_io import (Manifest, ManifestRecord, load_frame, load_manifest,
                         read_tensor, read_tensor_header, save_manifest,
                         write_tensor)
from .memory import (PrototypeBank, feature_enhanced_update, init_decoupled_noise,
                     init_random_noise, init_single_image, load_bank, save_bank)
from .patch_adapter import (AdapterParams, StreamFrame, add_coords, bilinear_resize,
                            fuse_scales, project_backward, project_forward)
from .scorer import ScoreMap, anomaly_map, match_score, upsample_scores
from .synth_source import DriftSpec, SynthConfig, eval_frames, synth_frame, train_stream

__version__ = "0.1.0"

__all__ = [
    "AdamHyper", "AdapterParams", "ConfigError", "DriftOutcome", "DriftSpec",
    "EngineConfig", "EngineState", "EvalResult", "InsufficientPointsError",
    "LemoError", "LossConfig", "Manifest", "ManifestRecord", "ManifestStreamSpec",
    "MetricUndefinedError", "NumericalError", "PrototypeBank", "ScoreMap",
    "ShapeError", "StreamFrame", "StreamReport", "SynthConfig", "SynthStreamSpec",
    "TensorFormatError", "adam_step", "add_coords", "anomaly_map", "anonce_loss",
    "aupro", "auroc", "bilinear_resize", "bootstrap", "detect", "eval_frames",
    "evaluate_state", "feature_enhanced_update", "fuse_scales", "init_decoupled_noise",
    "init_random_noise", "init_single_image", "load_bank", "load_frame",
    "load_manifest", "match_score", "project_backward", "project_forward",
    "read_tensor", "read_tensor_header", "run_ablation_grid", "run_drift_experiment",
    "run_stream", "save_bank", "save_manifest", "synth_frame", "train_step",
    "train_stream", "upsample_scores", "write_tensor",
]
