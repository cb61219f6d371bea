"""Metrics and experiment runners.

Image-level AUROC comes from the midrank statistic, pixel-level AUPRO from a
per-region overlap sweep against global false-positive rate.  On top of the
metrics sit the init-by-update ablation grid and the two-mode drift
protocol, both over deterministic frame sources.
"""

import hashlib
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

from .engine import EngineConfig, detect, run_stream
from .errors import ConfigError, MetricUndefinedError, ShapeError
from .feature_io import Manifest, load_frame
from .memory import PrototypeBank
from .scorer import upsample_scores
from .synth_source import DriftSpec, SynthConfig, apply_drift
from .synth_source import eval_frames as synth_eval_frames
from .synth_source import train_stream as synth_train_stream

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int64)
MAX_THRESHOLDS = 512

INIT_ORDER = ("single_image", "noise", "decoupled_noise")
UPDATE_ORDER = ("none", "learning", "feature_enhanced")


def auroc(scores, labels) -> float:
    """Area under the ROC curve via midranks.

    Equals the Mann-Whitney U statistic over n+ * n-, so ties contribute
    exactly 1/2 and the result matches the all-pairs comparison count.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} vs labels {y.shape}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("auroc needs both classes present")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupro(maps, masks, fpr_limit: float = 0.3) -> float:
    """Per-region overlap area against global FPR, up to ``fpr_limit``.

    Connected components (4-connectivity) of the masks are the regions;
    PRO(t) is the mean fraction of each region detected at threshold t, and
    the curve is integrated by trapezoid over FPR in [0, fpr_limit] then
    normalized by the limit.  All distinct scores serve as thresholds when
    there are at most 512, otherwise 512 quantile-spaced ones.
    """
    if not 0.0 < fpr_limit <= 1.0:
        raise ConfigError(f"fpr_limit must lie in (0, 1], got {fpr_limit}")
    if len(maps) != len(masks) or not maps:
        raise ConfigError("need equal, nonzero counts of maps and masks")
    region_scores = []
    neg_parts = []
    all_parts = []
    for a_raw, m_raw in zip(maps, masks):
        a = np.asarray(a_raw, dtype=np.float64)
        m = np.asarray(m_raw) > 0.5
        if a.shape != m.shape:
            raise ShapeError(f"map {a.shape} vs mask {m.shape}")
        labeled, n_regions = ndimage.label(m, structure=FOUR_CONN)
        for r in range(1, n_regions + 1):
            region_scores.append(np.sort(a[labeled == r], axis=None))
        neg_parts.append(a[~m].ravel())
        all_parts.append(a.ravel())
    if not region_scores:
        raise MetricUndefinedError("aupro needs at least one anomalous region")
    neg = np.sort(np.concatenate(neg_parts))
    if neg.size == 0:
        raise MetricUndefinedError("aupro needs at least one normal pixel")

    scores = np.concatenate(all_parts)
    thr = np.unique(scores)
    if thr.size > MAX_THRESHOLDS:
        thr = np.unique(np.quantile(scores, np.linspace(0.0, 1.0, MAX_THRESHOLDS)))
    thr = thr[::-1]
    # detected(t) = score >= t; descending thresholds give ascending FPR
    fpr = (neg.size - np.searchsorted(neg, thr, side="left")) / neg.size
    pro = np.zeros(thr.size, dtype=np.float64)
    for rs in region_scores:
        pro += (rs.size - np.searchsorted(rs, thr, side="left")) / rs.size
    pro /= len(region_scores)
    fpr = np.concatenate([[0.0], fpr])
    pro = np.concatenate([[0.0], pro])

    # lowest threshold detects everything, so the curve always reaches FPR 1
    j = int(np.argmax(fpr >= fpr_limit))
    if fpr[j] == fpr_limit:
        end_pro = pro[j]
    else:
        f0, f1 = fpr[j - 1], fpr[j]
        p0, p1 = pro[j - 1], pro[j]
        end_pro = p0 + (p1 - p0) * (fpr_limit - f0) / (f1 - f0)
    xs = np.concatenate([fpr[:j], [fpr_limit]])
    ys = np.concatenate([pro[:j], [end_pro]])
    return float(np.trapezoid(ys, xs) / fpr_limit)


@dataclass(frozen=True)
class EvalResult:
    i_auroc: float
    p_auroc: float | None
    p_aupro: float | None
    n_images: int
    n_pixels: int


def evaluate_state(state, frames, fpr_limit: float = 0.3,
                   pixel_metrics: bool = True) -> EvalResult:
    """Score every frame against the state's snapshot and compute metrics.

    Pixel metrics require masks; score grids are upsampled to mask
    resolution when the two differ.  Frames without masks only contribute
    to the image-level score.
    """
    frames = list(frames)
    if not frames:
        raise ConfigError("empty eval set")
    scores, labels = [], []
    maps, masks = [], []
    n_pixels = 0
    for f in frames:
        sm = detect(state, f)
        scores.append(sm.image_score)
        labels.append(f.label == "anomalous")
        if pixel_metrics and f.mask is not None:
            a = sm.a
            if a.shape != f.mask.shape:
                a = upsample_scores(a, f.mask.shape[0], f.mask.shape[1])
            maps.append(a)
            masks.append(f.mask)
            n_pixels += int(f.mask.size)
    p_roc = p_pro = None
    if maps and any(m.any() for m in masks):
        flat_a = np.concatenate([m.ravel() for m in maps])
        flat_m = np.concatenate([np.asarray(m).ravel() for m in masks])
        p_roc = auroc(flat_a, flat_m > 0.5)
        p_pro = aupro(maps, masks, fpr_limit)
    return EvalResult(i_auroc=auroc(scores, labels), p_auroc=p_roc, p_aupro=p_pro,
                      n_images=len(frames), n_pixels=n_pixels)


def bank_digest(bank: PrototypeBank) -> str:
    """Hash of the prototype values alone (not moments or counts)."""
    return hashlib.sha256(np.ascontiguousarray(bank.protos).tobytes()).hexdigest()


@dataclass(frozen=True)
class SynthStreamSpec:
    """Deterministic synthetic source: fresh iterators per call."""

    synth: SynthConfig
    n_train: int
    n_eval: int = 60
    anomalous_frac: float = 0.5

    def __post_init__(self):
        if self.n_train < 1:
            raise ConfigError(f"n_train must be >= 1, got {self.n_train}")

    def train_frames(self, drift: DriftSpec | None = None):
        return synth_train_stream(self.synth, self.n_train, drift=drift)

    def eval_set(self, drift: DriftSpec | None = None) -> list:
        return synth_eval_frames(self.synth, self.n_eval, self.anomalous_frac, drift=drift)


@dataclass(frozen=True)
class ManifestStreamSpec:
    """Frame source backed by feature files on disk."""

    manifest: Manifest

    def train_frames(self, drift: DriftSpec | None = None):
        indices = [i for i, r in enumerate(self.manifest.records) if r.split == "train-stream"]
        if not indices:
            raise ConfigError("manifest has no train-stream records")
        for i in indices:
            frame = load_frame(self.manifest, i)
            if drift is not None:
                frame = apply_drift(frame, drift, frame.frame_idx)
            yield frame

    def eval_set(self, drift: DriftSpec | None = None) -> list:
        indices = [i for i, r in enumerate(self.manifest.records) if r.split == "test"]
        if not indices:
            raise ConfigError("manifest has no test records")
        frames = []
        for i in indices:
            frame = load_frame(self.manifest, i)
            if drift is not None:
                frame = apply_drift(frame, drift, frame.frame_idx)
            frames.append(frame)
        return frames


def run_ablation_grid(base_cfg: EngineConfig, spec) -> dict:
    """All nine init-by-update cells on identical streams.

    Returns ``{(init, update): {"i_auroc": float, "bank_digest": str}}``.
    Every cell re-reads the same deterministic source, so differences come
    only from the strategy under test.
    """
    cells = {}
    for init in INIT_ORDER:
        for update in UPDATE_ORDER:
            cfg = replace(base_cfg, init=init, update=update)
            report = run_stream(cfg, spec.train_frames())
            state = report.final_state
            result = evaluate_state(state, spec.eval_set(), pixel_metrics=False)
            cells[(init, update)] = {
                "i_auroc": result.i_auroc,
                "bank_digest": bank_digest(state.bank),
            }
    return cells


def ablation_to_csv(cells: dict) -> str:
    lines = ["init," + ",".join(UPDATE_ORDER)]
    for init in INIT_ORDER:
        row = [init] + [f"{cells[(init, u)]['i_auroc']:.6f}" for u in UPDATE_ORDER]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def ablation_to_text(cells: dict) -> str:
    width = max(len(i) for i in INIT_ORDER) + 2
    col = max(max(len(u) for u in UPDATE_ORDER), 8) + 2
    lines = ["I-AUROC by bank initialization and update strategy",
             "init".ljust(width) + "".join(u.rjust(col) for u in UPDATE_ORDER)]
    for init in INIT_ORDER:
        vals = "".join(f"{cells[(init, u)]['i_auroc']:.4f}".rjust(col) for u in UPDATE_ORDER)
        lines.append(init.ljust(width) + vals)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DriftOutcome:
    """Accuracy on clean data and under drift, for one adaptation mode."""

    clean: EvalResult
    drifted: EvalResult

    @property
    def delta(self) -> float:
        return self.drifted.i_auroc - self.clean.i_auroc


def run_drift_experiment(cfg: EngineConfig, spec, drift: DriftSpec, mode: str,
                         fpr_limit: float = 0.3, pixel_metrics: bool = False) -> DriftOutcome:
    """Clean baseline plus a drifted leg under one adaptation mode.

    ``offline`` trains on the clean stream, freezes, and tests on drifted
    frames; ``online`` keeps training while the drifted stream flows, then
    tests on the same drifted frames.  The clean baseline (clean stream,
    clean test) is shared by both modes.
    """
    if mode not in ("offline", "online"):
        raise ConfigError(f"mode must be offline or online, got {mode!r}")
    clean_state = run_stream(cfg, spec.train_frames()).final_state
    clean = evaluate_state(clean_state, spec.eval_set(), fpr_limit, pixel_metrics)
    if mode == "offline":
        drift_state = clean_state
    else:
        drift_state = run_stream(cfg, spec.train_frames(drift)).final_state
    drifted = evaluate_state(drift_state, spec.eval_set(drift), fpr_limit, pixel_metrics)
    return DriftOutcome(clean=clean, drifted=drifted)


def drift_to_csv(outcome: DriftOutcome, drift: DriftSpec, mode: str) -> str:
    return ("mode,kind,magnitude,onset_frame,clean_i_auroc,drifted_i_auroc,delta\n"
            f"{mode},{drift.kind},{drift.magnitude},{drift.onset_frame},"
            f"{outcome.clean.i_auroc:.6f},{outcome.drifted.i_auroc:.6f},"
            f"{outcome.delta:+.6f}\n")


def drift_to_text(outcome: DriftOutcome, drift: DriftSpec, mode: str) -> str:
    return (f"drift {drift.kind} magnitude={drift.magnitude} onset={drift.onset_frame} "
            f"mode={mode}\n"
            f"clean   I-AUROC: {outcome.clean.i_auroc:.4f}\n"
            f"drifted I-AUROC: {outcome.drifted.i_auroc:.4f} ({outcome.delta:+.4f})\n")
