"""Deterministic synthetic feature streams and drift injection.

Normal frames draw each grid cell's raw feature from one of ``n_modes``
Gaussian modes: centers are fixed once per seed, the cell's mode choice and
noise vary per frame.  Anomalous frames add a constant shift inside a
randomly placed patch and carry the matching binary mask.

Drift is injected in raw feature space, which is the interface the engine
actually consumes.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .patch_adapter import StreamFrame
from .seeding import rng_for, split_seed

DRIFT_KINDS = ("brightness", "gaussian")


@dataclass(frozen=True)
class SynthConfig:
    d_raw: int = 270
    h: int = 14
    w: int = 14
    n_modes: int = 5
    mode_spread: float = 1.0
    noise_sigma: float = 0.25
    anomaly_shift: float = 1.0
    anomaly_patch: tuple = (4, 4)
    seed: int = 0

    def __post_init__(self):
        if self.d_raw < 1 or self.h < 1 or self.w < 1:
            raise ConfigError(f"empty grid: d_raw={self.d_raw}, h={self.h}, w={self.w}")
        if self.n_modes < 1:
            raise ConfigError("n_modes must be >= 1")
        if not self.noise_sigma > 0:
            raise ConfigError("noise_sigma must be > 0")
        ph, pw = self.anomaly_patch
        if not (1 <= ph <= self.h and 1 <= pw <= self.w):
            raise ConfigError(f"anomaly_patch {self.anomaly_patch} must fit in "
                              f"({self.h}, {self.w})")


@dataclass(frozen=True)
class DriftSpec:
    kind: str
    magnitude: float
    onset_frame: int = 0

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ConfigError(f"drift kind must be one of {DRIFT_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.magnitude):
            raise ConfigError("drift magnitude must be finite")
        if self.onset_frame < 0:
            raise ConfigError("onset_frame must be >= 0")


@lru_cache(maxsize=32)
def _mode_centers(cfg: SynthConfig) -> np.ndarray:
    rng = rng_for(cfg.seed, "modes")
    return rng.standard_normal((cfg.n_modes, cfg.d_raw)) * cfg.mode_spread


def synth_frame(cfg: SynthConfig, frame_idx: int, anomalous: bool) -> StreamFrame:
    """Generate one frame; pure function of (cfg, frame_idx, anomalous)."""
    centers = _mode_centers(cfg)
    rng = rng_for(cfg.seed, f"frame:{frame_idx}")
    cell_modes = rng.integers(cfg.n_modes, size=(cfg.h, cfg.w))
    noise = rng.standard_normal((cfg.d_raw, cfg.h, cfg.w)) * cfg.noise_sigma
    base = centers[cell_modes].transpose(2, 0, 1)  # (d_raw, h, w)
    features = (base + noise).astype(np.float32)
    ph, pw = cfg.anomaly_patch
    top = int(rng.integers(cfg.h - ph + 1))
    left = int(rng.integers(cfg.w - pw + 1))
    mask = np.zeros((cfg.h, cfg.w), dtype=np.float32)
    if anomalous:
        features[:, top:top + ph, left:left + pw] += np.float32(cfg.anomaly_shift)
        mask[top:top + ph, left:left + pw] = 1.0
    return StreamFrame(scales=[features],
                       label="anomalous" if anomalous else "normal",
                       mask=mask, frame_idx=frame_idx)


def apply_drift(frame: StreamFrame, spec: DriftSpec, frame_idx: int) -> StreamFrame:
    """Shift raw features once the stream passes the onset frame."""
    if frame_idx < spec.onset_frame:
        return frame
    if spec.kind == "brightness":
        scales = [s + np.float32(spec.magnitude) for s in frame.scales]
    else:
        scales = []
        for i, s in enumerate(frame.scales):
            rng = np.random.Generator(np.random.PCG64(
                split_seed(frame_idx, f"gaussian-drift:{i}")))
            noise = rng.standard_normal(s.shape) * spec.magnitude
            scales.append((s + noise).astype(np.float32))
    return StreamFrame(scales=scales, label=frame.label, mask=frame.mask,
                       frame_idx=frame.frame_idx)


def train_stream(cfg: SynthConfig, n_frames: int, drift: DriftSpec | None = None):
    """Yield ``n_frames`` normal training frames, with optional drift."""
    for i in range(n_frames):
        frame = synth_frame(cfg, i, anomalous=False)
        if drift is not None:
            frame = apply_drift(frame, drift, i)
        yield frame


EVAL_IDX_OFFSET = 1_000_000  # eval frames never share noise draws with the train stream


def eval_frames(cfg: SynthConfig, n_eval: int, anomalous_frac: float = 0.5,
                drift: DriftSpec | None = None) -> list:
    """Held-out labeled frames; anomalous positions are a seeded permutation."""
    if n_eval < 2:
        raise ConfigError("eval set needs at least 2 frames")
    n_anom = int(round(anomalous_frac * n_eval))
    flags = np.zeros(n_eval, dtype=bool)
    flags[:n_anom] = True
    rng_for(cfg.seed, "eval-labels").shuffle(flags)
    frames = []
    for i, anomalous in enumerate(flags):
        idx = EVAL_IDX_OFFSET + i
        frame = synth_frame(cfg, idx, bool(anomalous))
        if drift is not None:
            frame = apply_drift(frame, drift, idx)
        frames.append(frame)
    return frames
