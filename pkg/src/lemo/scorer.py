"""Anomaly scoring against a bank snapshot.

S(i, j) is the distance to the nearest prototype; the anomaly score
reweights it by that prototype's softmax share, A = S * exp(-S) / sum_k
exp(-dist_k), computed per position over all K prototypes.  The image-level
score aggregates the map (max by default).
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, ShapeError
from .memory import PrototypeBank, _dists
from .patch_adapter import bilinear_resize
from .tensor_core import as_tensor3


@dataclass
class ScoreMap:
    s: np.ndarray  # (H, W) match scores, >= 0
    a: np.ndarray  # (H, W) anomaly scores, zero exactly where s is zero
    image_score: float
    upsampled: np.ndarray | None = None


def _dist_grid(z_test: np.ndarray, bank: PrototypeBank) -> np.ndarray:
    zt = as_tensor3(z_test, "z_test")
    d, h, w = zt.shape
    if d != bank.d:
        raise ShapeError(f"feature dim {d} != bank dim {bank.d}")
    flat = zt.reshape(d, h * w).T.astype(np.float64)
    return _dists(flat, bank.protos.astype(np.float64))


def match_score(z_test: np.ndarray, bank: PrototypeBank) -> np.ndarray:
    """Min distance to any prototype, per grid position."""
    dist = _dist_grid(z_test, bank)
    h, w = z_test.shape[1], z_test.shape[2]
    return dist.min(axis=1).reshape(h, w).astype(np.float32)


def aggregate_image_score(a: np.ndarray, agg: str = "max", top_q: float = 0.01) -> float:
    if agg == "max":
        return float(a.max())
    if agg == "top_q_mean":
        flat = np.sort(a, axis=None)[::-1]
        n = max(1, int(round(top_q * flat.size)))
        return float(flat[:n].mean())
    raise ConfigError(f"unknown aggregation {agg!r}")


def anomaly_map(z_test: np.ndarray, bank: PrototypeBank, smooth_sigma: float = 0.0,
                agg: str = "max", top_q: float = 0.01) -> ScoreMap:
    """Weighted anomaly map plus the image-level score.

    The softmax denominator runs over all K prototypes at each position and
    is shifted by the minimum distance, so the weight w = 1 / sum_k
    exp(-(d_k - S)) lies in (0, 1] and never overflows.
    """
    dist = _dist_grid(z_test, bank)
    h, w = z_test.shape[1], z_test.shape[2]
    s = dist.min(axis=1)
    weight = 1.0 / np.exp(-(dist - s[:, None])).sum(axis=1)
    a = (weight * s).reshape(h, w)
    if smooth_sigma > 0:
        a = gaussian_filter(a, sigma=smooth_sigma)
    a32 = a.astype(np.float32)
    return ScoreMap(s=s.reshape(h, w).astype(np.float32), a=a32,
                    image_score=aggregate_image_score(a32, agg, top_q))


def upsample_scores(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsampling of a score grid to mask resolution."""
    arr = np.asarray(a, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeError(f"score grid must be 2-d, got {arr.shape}")
    if out_h < arr.shape[0] or out_w < arr.shape[1]:
        raise ShapeError(f"output {out_h}x{out_w} smaller than input {arr.shape}")
    if (out_h, out_w) == arr.shape:
        return arr
    return bilinear_resize(arr, out_h, out_w)
