"""Dense tensor conventions and the numerical kernels everything else needs.

Arrays are plain numpy ``float32`` throughout: a matrix is a C-contiguous
``(rows, cols)`` array, a feature tensor is channel-major ``(d, h, w)``.
Accumulations run in float64 and results are cast back to float32.
"""

import numpy as np

from .errors import InsufficientPointsError, NumericalError, ShapeError


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite, C-contiguous float32 (rows, cols) array."""
    arr = np.ascontiguousarray(a, dtype=np.float32)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def as_tensor3(a, name: str = "tensor") -> np.ndarray:
    """Coerce to a finite, C-contiguous float32 (d, h, w) array."""
    arr = np.ascontiguousarray(a, dtype=np.float32)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def orthonormal_rows(seed: int, k: int, d: int) -> np.ndarray:
    """Draw a k x d matrix with orthonormal rows from Gaussian noise.

    Samples standard-normal entries and orthonormalizes the rows with
    modified Gram-Schmidt plus one re-orthogonalization pass, i.e. the Q
    factor of a QR factorization of the noise.  Deterministic for a fixed
    seed.
    """
    if k < 1 or d < 1:
        raise ShapeError(f"empty shape: k={k}, d={d}")
    if k > d:
        raise ShapeError(f"at most d={d} orthonormal rows exist, requested k={k}")
    rng = np.random.Generator(np.random.PCG64(seed))
    q = rng.standard_normal((k, d))
    for _ in range(2):  # MGS + one re-orthogonalization pass
        for i in range(k):
            for j in range(i):
                q[i] -= (q[i] @ q[j]) * q[j]
            norm = np.linalg.norm(q[i])
            if norm < 1e-12:
                # vanishing residual: replace with a fresh draw and redo this row
                q[i] = rng.standard_normal(d)
                for j in range(i):
                    q[i] -= (q[i] @ q[j]) * q[j]
                norm = np.linalg.norm(q[i])
            q[i] /= norm
    return q.astype(np.float32)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted sampling of initial centers."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            j = int(rng.integers(n))
        else:
            r = rng.random() * total
            j = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            j = min(j, n - 1)
        centers[i] = x[j]
        closest = np.minimum(closest, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def _sqdist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = ((x**2).sum(axis=1)[:, None] + (c**2).sum(axis=1)[None, :]
          - 2.0 * (x @ c.T))
    np.maximum(d2, 0.0, out=d2)
    return d2


def kmeans(points, k: int, max_iter: int = 100, seed: int = 0):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(centroids, labels)`` where ``centroids`` is k x d float32 and
    ``labels`` maps each point to its cluster.  Empty clusters are re-seeded
    to the point farthest from its assigned centroid (the point moves with
    it, so every returned cluster is nonempty).  Converged when no label
    changes or ``max_iter`` is reached; on exit each centroid equals the
    mean of its members.
    """
    pts = as_matrix(points, "points")
    n = pts.shape[0]
    if k < 1:
        raise ShapeError(f"k must be >= 1, got {k}")
    if max_iter < 1:
        raise ShapeError(f"max_iter must be >= 1, got {max_iter}")
    if n < k:
        raise InsufficientPointsError(f"{n} points cannot fill {k} clusters")

    x = pts.astype(np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeanspp(x, k, rng)
    prev = None
    for _ in range(max_iter):
        d2 = _sqdist(x, centroids)
        labels = d2.argmin(axis=1)
        sizes = np.bincount(labels, minlength=k)
        while (sizes == 0).any():
            c = int(np.flatnonzero(sizes == 0)[0])
            own = d2[np.arange(n), labels]
            # only steal from clusters that keep at least one member
            own = np.where(sizes[labels] > 1, own, -1.0)
            idx = int(own.argmax())
            sizes[labels[idx]] -= 1
            labels[idx] = c
            sizes[c] = 1
        for c in range(k):
            centroids[c] = x[labels == c].mean(axis=0)
        if prev is not None and (labels == prev).all():
            break
        prev = labels
    return centroids.astype(np.float32), labels


def pairwise_dist(a, b) -> np.ndarray:
    """Euclidean distance matrix between rows of ``a`` (n x d) and ``b`` (m x d)."""
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape[1] != bm.shape[1]:
        raise ShapeError(f"dimension mismatch: {am.shape[1]} vs {bm.shape[1]}")
    d2 = _sqdist(am.astype(np.float64), bm.astype(np.float64))
    if a is b or am.shape == bm.shape and np.array_equal(am, bm):
        np.fill_diagonal(d2, 0.0)
        d2 = 0.5 * (d2 + d2.T)
    return np.sqrt(d2).astype(np.float32)
