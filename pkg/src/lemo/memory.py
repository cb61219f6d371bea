"""Prototype memory bank: initialization strategies and the
feature-enhanced rebalancing update.

The bank is a small K x D matrix whose rows are prototypes of local normal
patterns, plus per-prototype assignment counts and Adam moment state.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import feature_io
from .errors import ConfigError, InsufficientPointsError, NumericalError
from .tensor_core import as_tensor3, kmeans, orthonormal_rows


@dataclass
class PrototypeBank:
    protos: np.ndarray  # (K, D) float32
    counts: np.ndarray = field(default=None)  # (K,) int64, latest rebalance sizes
    adam_m: np.ndarray = field(repr=False, default=None)
    adam_v: np.ndarray = field(repr=False, default=None)
    step_count: int = 0

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.k, dtype=np.int64)
        if self.adam_m is None:
            self.adam_m = np.zeros_like(self.protos)
        if self.adam_v is None:
            self.adam_v = np.zeros_like(self.protos)

    @property
    def k(self) -> int:
        return self.protos.shape[0]

    @property
    def d(self) -> int:
        return self.protos.shape[1]

    def snapshot(self) -> np.ndarray:
        """Immutable copy of the prototypes, safe to share across threads."""
        p = self.protos.copy()
        p.flags.writeable = False
        return p

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(protos=self.protos.copy(), counts=self.counts.copy(),
                             adam_m=self.adam_m.copy(), adam_v=self.adam_v.copy(),
                             step_count=self.step_count)

    def n_floats(self) -> int:
        """Retained float count (prototypes + moments + counts)."""
        return 3 * self.protos.size + self.counts.size


def init_decoupled_noise(k: int, d: int, seed: int) -> PrototypeBank:
    """Orthonormalized Gaussian noise: no data prior, no collinear prototypes."""
    return PrototypeBank(protos=orthonormal_rows(seed, k, d))


def init_random_noise(k: int, d: int, seed: int) -> PrototypeBank:
    """Plain i.i.d. standard-normal rows, deliberately not orthogonalized."""
    if k < 1 or d < 1:
        raise ConfigError(f"bank needs k, d >= 1, got k={k}, d={d}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return PrototypeBank(protos=rng.standard_normal((k, d)).astype(np.float32))


def init_single_image(z0: np.ndarray, k: int, seed: int) -> PrototypeBank:
    """Cluster one frame's position-features into K prototypes."""
    z = as_tensor3(z0, "z0")
    d, h, w = z.shape
    if h * w < k:
        raise InsufficientPointsError(f"{h * w} positions cannot seed {k} prototypes")
    points = z.reshape(d, h * w).T
    centroids, _ = kmeans(points, k, max_iter=100, seed=seed)
    return PrototypeBank(protos=centroids)


def _dists(points64: np.ndarray, protos64: np.ndarray) -> np.ndarray:
    d2 = ((points64**2).sum(axis=1)[:, None] + (protos64**2).sum(axis=1)[None, :]
          - 2.0 * points64 @ protos64.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def pos_neg_masks(dist: np.ndarray, n_pos: int) -> np.ndarray:
    """Boolean (n, K) mask of the n_pos nearest prototypes per row.

    Ties broken toward the lower prototype index (stable argsort).
    """
    k = dist.shape[1]
    if not 1 <= n_pos < k:
        raise ConfigError(f"n_pos must be in [1, {k - 1}], got {n_pos}")
    order = np.argsort(dist, axis=1, kind="stable")
    mask = np.zeros(dist.shape, dtype=bool)
    np.put_along_axis(mask, order[:, :n_pos], True, axis=1)
    return mask


def assign_pos_neg(z_ij: np.ndarray, bank: PrototypeBank, n_pos: int):
    """Split prototype indices into (positives, negatives) for one feature."""
    z = np.asarray(z_ij, dtype=np.float64).reshape(1, -1)
    dist = _dists(z, bank.protos.astype(np.float64))
    mask = pos_neg_masks(dist, n_pos)[0]
    idx = np.arange(bank.k)
    return idx[mask], idx[~mask]


def feature_enhanced_update(bank: PrototypeBank, z: np.ndarray,
                            min_frac: float, seed: int = 0) -> PrototypeBank:
    """Rebalance the bank against one frame's features.

    Assigns every position-feature to its nearest prototype, recenters each
    nonempty group on its members, then repeatedly merges the smallest
    under-filled group (size < min_frac * HW/K) into the current largest
    group and splits the union with 2-means, until every group clears the
    floor.  K never changes; counts afterwards sum to HW.

    The split is size-constrained: members are ordered by their 2-means
    assignment margin and the boundary moves just far enough that both
    halves clear the floor.  Plain 2-means would re-isolate a lone outlier
    and cycle; the constrained cut fixes at least one deficient group per
    round, so the loop ends within K rounds.
    """
    if not 0.0 < min_frac < 1.0:
        raise ConfigError(f"min_frac must be in (0, 1), got {min_frac}")
    zt = as_tensor3(z, "z")
    d, h, w = zt.shape
    n = h * w
    k = bank.k
    if n < 2 * k:
        raise InsufficientPointsError(f"need HW >= 2K ({2 * k}), got {n}")
    pts = zt.reshape(d, n).T.astype(np.float64)
    protos = bank.protos.astype(np.float64)

    labels = _dists(pts, protos).argmin(axis=1)
    for c in range(k):
        members = labels == c
        if members.any():
            protos[c] = pts[members].mean(axis=0)

    floor = min_frac * (n / k)
    need = int(np.ceil(floor))
    sizes = np.bincount(labels, minlength=k)
    max_rounds = 20 * k
    rounds = 0
    while (sizes < floor).any():
        if rounds >= max_rounds:
            raise NumericalError("rebalancing failed to clear the group-size floor")
        small = int(np.where(sizes < floor, sizes, n + 1).argmin())
        big = int(sizes.argmax())
        members = np.where((labels == small) | (labels == big))[0]
        m = members.size
        if m < 2 * need:
            raise NumericalError(
                f"cannot split a group of {m} into two of at least {need}")
        cents, _ = kmeans(pts[members].astype(np.float32), 2, max_iter=50,
                          seed=seed + rounds)
        d2 = _dists(pts[members], cents.astype(np.float64))
        margin = d2[:, 0] - d2[:, 1]  # negative prefers centroid 0
        order = np.argsort(margin, kind="stable")
        t = int(np.clip((margin < 0).sum(), need, m - need))
        half0 = members[order[:t]]
        half1 = members[order[t:]]
        # larger half keeps the big slot
        slots = (big, small) if half0.size >= half1.size else (small, big)
        labels[half0] = slots[0]
        labels[half1] = slots[1]
        protos[slots[0]] = pts[half0].mean(axis=0)
        protos[slots[1]] = pts[half1].mean(axis=0)
        sizes = np.bincount(labels, minlength=k)
        rounds += 1

    return PrototypeBank(protos=protos.astype(np.float32), counts=sizes,
                         adam_m=bank.adam_m.copy(), adam_v=bank.adam_v.copy(),
                         step_count=bank.step_count)


def save_bank(bank: PrototypeBank, tensor_path, sidecar_path) -> None:
    feature_io.write_tensor(tensor_path, bank.protos)
    Path(sidecar_path).write_text(json.dumps({
        "counts": bank.counts.tolist(),
        "step_count": bank.step_count,
    }, indent=2), encoding="utf-8")


def load_bank(tensor_path, sidecar_path) -> PrototypeBank:
    protos = feature_io.read_tensor(tensor_path)
    side = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    return PrototypeBank(protos=protos,
                         counts=np.asarray(side["counts"], dtype=np.int64),
                         step_count=int(side["step_count"]))
