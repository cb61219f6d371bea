"""Online streaming loop: one training step per incoming frame, interleaved
detection, and stream-level reporting.

Each frame is lifted (scale fusion + coordinate channels), projected, scored
against the bank, and used for exactly one joint optimization step of the
adapter and (strategy permitting) the prototypes.  Frames are never stored
or revisited, so retained memory is the bank, the adapter, and whatever
frame is currently in hand, independent of stream length.

Concurrency contract: one writer.  ``train_step`` mutates the state;
``detect`` only reads it, so any number of detect calls may run against a
snapshot between steps.
"""

import hashlib
import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .anonce import AdamHyper, LossConfig, adam_step, anonce_loss
from .errors import ConfigError, NumericalError
from .memory import (PrototypeBank, feature_enhanced_update, init_decoupled_noise,
                     init_random_noise, init_single_image)
from .patch_adapter import (AdapterParams, StreamFrame, add_coords, fuse_scales,
                            project_backward, project_forward)
from .scorer import ScoreMap, anomaly_map
from .seeding import split_seed

INIT_KINDS = ("single_image", "noise", "decoupled_noise")
UPDATE_KINDS = ("none", "learning", "feature_enhanced")

# frames excluded from the front of every timing aggregate
WARMUP_FRAMES = 10


@dataclass(frozen=True)
class EngineConfig:
    init: str = "decoupled_noise"
    update: str = "learning"
    loss: LossConfig = field(default_factory=LossConfig)
    adam: AdamHyper = field(default_factory=lambda: AdamHyper(weight_decay=5e-4))
    k: int = 10
    d_out: int = 272
    min_frac: float = 0.2
    seed: int = 0
    detect_every: int = 50
    rebalance_every: int = 1

    def __post_init__(self):
        if self.init not in INIT_KINDS:
            raise ConfigError(f"init must be one of {INIT_KINDS}, got {self.init!r}")
        if self.update not in UPDATE_KINDS:
            raise ConfigError(f"update must be one of {UPDATE_KINDS}, got {self.update!r}")
        if self.k < 1 or self.d_out < 1:
            raise ConfigError(f"need k, d_out >= 1, got k={self.k}, d_out={self.d_out}")
        if not 0.0 < self.min_frac < 1.0:
            raise ConfigError(f"min_frac must lie in (0, 1), got {self.min_frac}")
        if self.detect_every < 1 or self.rebalance_every < 1:
            raise ConfigError("detect_every and rebalance_every must be >= 1")


@dataclass
class EngineState:
    cfg: EngineConfig
    bank: PrototypeBank | None = None
    adapter: AdapterParams | None = None
    frames_seen: int = 0

    def retained_floats(self) -> int:
        """Floats held across frames (bank + adapter, moments included)."""
        total = 0
        if self.bank is not None:
            total += self.bank.n_floats()
        if self.adapter is not None:
            total += self.adapter.n_floats()
        return total

    def digest(self) -> str:
        """Hash of every retained array and counter, for purity checks."""
        h = hashlib.sha256()
        if self.bank is not None:
            for a in (self.bank.protos, self.bank.counts,
                      self.bank.adam_m, self.bank.adam_v):
                h.update(np.ascontiguousarray(a).tobytes())
            h.update(str(self.bank.step_count).encode())
        if self.adapter is not None:
            a = self.adapter
            for arr in (a.weight, a.bias, a.m_w, a.v_w, a.m_b, a.v_b):
                h.update(np.ascontiguousarray(arr).tobytes())
            h.update(str(a.step_count).encode())
        h.update(str(self.frames_seen).encode())
        return h.hexdigest()


def _lift(frame: StreamFrame) -> np.ndarray:
    return add_coords(fuse_scales(frame.scales))


def _ensure_adapter(state: EngineState, x: np.ndarray) -> None:
    if state.adapter is None:
        state.adapter = AdapterParams.initialize(
            x.shape[0], state.cfg.d_out, split_seed(state.cfg.seed, "adapter"))


def bootstrap(cfg: EngineConfig, first_frame: StreamFrame | None = None) -> EngineState:
    """Initialize bank and adapter; noise-family inits need no data.

    With ``init="single_image"`` the frame passes through the freshly
    initialized adapter and its position features are clustered into the K
    starting prototypes.  The frame itself is not trained on here.
    """
    state = EngineState(cfg=cfg)
    x = None
    if first_frame is not None:
        x = _lift(first_frame)
        _ensure_adapter(state, x)
    bank_seed = split_seed(cfg.seed, "bank")
    if cfg.init == "single_image":
        if first_frame is None:
            raise ConfigError("single_image init needs a first frame")
        if first_frame.label != "normal":
            raise ConfigError(
                f"single_image init needs a normal-labeled frame, got {first_frame.label!r}")
        z0 = project_forward(x, state.adapter)
        state.bank = init_single_image(z0, cfg.k, bank_seed)
    elif cfg.init == "noise":
        state.bank = init_random_noise(cfg.k, cfg.d_out, bank_seed)
    else:
        state.bank = init_decoupled_noise(cfg.k, cfg.d_out, bank_seed)
    return state


def train_step(state: EngineState, frame: StreamFrame):
    """One optimization round on one frame; returns ``(state, metrics)``.

    The adapter always takes an Adam step (weight decay on the weight only);
    the bank takes one unless the update strategy is ``none``.  Strategy
    ``feature_enhanced`` additionally rebalances the bank against the
    post-step features every ``rebalance_every`` frames.
    """
    cfg = state.cfg
    t0 = time.perf_counter()
    try:
        x = _lift(frame)
        _ensure_adapter(state, x)
        z = project_forward(x, state.adapter)
        loss, grad_z, grad_p = anonce_loss(z, state.bank, cfg.loss)
        grad_w, grad_b = project_backward(x, grad_z, state.adapter)
        no_decay = replace(cfg.adam, weight_decay=0.0)
        a = state.adapter
        new_step = adam_step(a.weight, grad_w, a.m_w, a.v_w, a.step_count, cfg.adam)
        adam_step(a.bias, grad_b, a.m_b, a.v_b, a.step_count, no_decay)
        a.step_count = new_step
        if cfg.update != "none":
            b = state.bank
            b.step_count = adam_step(b.protos, grad_p, b.adam_m, b.adam_v,
                                     b.step_count, no_decay)
        state.frames_seen += 1
        if cfg.update == "feature_enhanced" and state.frames_seen % cfg.rebalance_every == 0:
            z_post = project_forward(x, state.adapter)
            state.bank = feature_enhanced_update(
                state.bank, z_post, cfg.min_frac,
                seed=split_seed(cfg.seed, f"rebalance:{state.frames_seen}"))
    except NumericalError as e:
        raise NumericalError(f"frame {frame.frame_idx}: {e}") from e
    train_time = max(time.perf_counter() - t0, 1e-9)
    return state, {"frame_idx": frame.frame_idx, "loss": loss, "train_time": train_time}


def detect(state: EngineState, frame: StreamFrame) -> ScoreMap:
    """Score a frame against the current snapshot; never mutates state."""
    if state.bank is None or state.adapter is None:
        raise ConfigError("engine not ready: bootstrap with a frame or train one first")
    z = project_forward(_lift(frame), state.adapter)
    return anomaly_map(z, state.bank)


def _timed_detect(state: EngineState, frame: StreamFrame):
    """Detection with the lift+project and scoring segments timed apart."""
    t0 = time.perf_counter()
    z = project_forward(_lift(frame), state.adapter)
    t1 = time.perf_counter()
    sm = anomaly_map(z, state.bank)
    t2 = time.perf_counter()
    return sm, max(t1 - t0, 1e-9), max(t2 - t1, 1e-9)


def _frame_floats(frame: StreamFrame) -> int:
    total = sum(int(np.asarray(s).size) for s in frame.scales)
    if frame.mask is not None:
        total += int(frame.mask.size)
    return total


@dataclass
class StreamReport:
    """Per-frame records plus run-level aggregates.

    ``tps``/``tpi_ms`` cover the full per-frame round (train + detect);
    ``encoder_ms`` times scale fusion + projection and ``detect_ms`` the
    score computation, both measured on the detection pass.  The curve holds
    one ``(frame_idx, i_auroc)`` point per evaluation checkpoint.
    """

    records: list
    tps: float
    tpi_ms: float
    encoder_ms: float
    detect_ms: float
    curve: list
    peak_retained_floats: int
    n_frames: int
    final_state: EngineState | None = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "tps": self.tps,
            "tpi_ms": self.tpi_ms,
            "encoder_ms": self.encoder_ms,
            "detect_ms": self.detect_ms,
            "peak_retained_floats": self.peak_retained_floats,
            "curve": [[int(i), float(v)] for i, v in self.curve],
            "records": self.records,
        }


def run_stream(cfg: EngineConfig, source, eval_set=None) -> StreamReport:
    """Single pass over ``source``: train, detect, and checkpoint.

    With an ``eval_set``, image-level AUROC is evaluated against the current
    snapshot every ``cfg.detect_every`` frames and once more at the final
    frame.  Timing aggregates skip the first ``WARMUP_FRAMES`` frames when
    the stream is long enough to afford it.
    """
    from .evaluator import auroc  # metrics sit above the engine; import here to avoid a cycle

    frames = iter(source)
    try:
        first = next(frames)
    except StopIteration:
        raise ConfigError("empty stream") from None
    try:
        state = bootstrap(cfg, first)
    except NumericalError as e:
        raise NumericalError(f"frame {first.frame_idx}: {e}") from e

    records: list = []
    curve: list = []
    enc_times: list = []
    score_times: list = []
    peak = 0
    last_checkpoint_at = -1

    def checkpoint(frame_idx: int) -> None:
        scores = [float(detect(state, ef).image_score) for ef in eval_set]
        labels = [ef.label == "anomalous" for ef in eval_set]
        curve.append((frame_idx, auroc(scores, labels)))

    n = 0
    frame = first
    for frame in itertools.chain([first], frames):
        state, metrics = train_step(state, frame)
        sm, enc_s, score_s = _timed_detect(state, frame)
        n += 1
        enc_times.append(enc_s)
        score_times.append(score_s)
        records.append({
            "frame_idx": frame.frame_idx,
            "loss": metrics["loss"],
            "train_time": metrics["train_time"],
            "detect_time": enc_s + score_s,
            "image_score": float(sm.image_score),
            "label": frame.label,
        })
        peak = max(peak, state.retained_floats() + _frame_floats(frame))
        if eval_set is not None and n % cfg.detect_every == 0:
            checkpoint(frame.frame_idx)
            last_checkpoint_at = n
    if eval_set is not None and last_checkpoint_at != n:
        checkpoint(frame.frame_idx)

    start = WARMUP_FRAMES if n > WARMUP_FRAMES else 0
    totals = [r["train_time"] + r["detect_time"] for r in records[start:]]
    mean_total = float(np.mean(totals))
    return StreamReport(
        records=records,
        tps=1.0 / mean_total,
        tpi_ms=1e3 * mean_total,
        encoder_ms=1e3 * float(np.mean(enc_times[start:])),
        detect_ms=1e3 * float(np.mean(score_times[start:])),
        curve=curve,
        peak_retained_floats=peak,
        n_frames=n,
        final_state=state,
    )
