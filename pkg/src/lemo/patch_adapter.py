"""Local patch adapter: multi-scale fusion, coordinate channels, and the
learnable per-position linear projection with its backward pass.

The projection is a 1x1 convolution, i.e. one shared affine map applied at
every grid position.  Weight decay is the caller's business (it applies to
the weight only, see the engine).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor_core import as_tensor3


@dataclass
class StreamFrame:
    """One unit of streaming input.

    ``scales`` holds raw multi-scale feature tensors (or a single pre-fused
    one).  ``mask`` is an optional binary grid for evaluation frames.
    """

    scales: list
    label: str = "unlabeled"
    mask: np.ndarray | None = None
    frame_idx: int = 0


@dataclass
class AdapterParams:
    """Per-position projection weights plus Adam moment state."""

    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)
    m_w: np.ndarray = field(repr=False, default=None)
    v_w: np.ndarray = field(repr=False, default=None)
    m_b: np.ndarray = field(repr=False, default=None)
    v_b: np.ndarray = field(repr=False, default=None)
    step_count: int = 0

    def __post_init__(self):
        if self.m_w is None:
            self.m_w = np.zeros_like(self.weight)
        if self.v_w is None:
            self.v_w = np.zeros_like(self.weight)
        if self.m_b is None:
            self.m_b = np.zeros_like(self.bias)
        if self.v_b is None:
            self.v_b = np.zeros_like(self.bias)

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def initialize(cls, d_in: int, d_out: int, seed: int) -> "AdapterParams":
        """Fan-in scaled uniform weight in [-1/sqrt(d_in), 1/sqrt(d_in)], zero bias."""
        if d_in < 1 or d_out < 1:
            raise ShapeError(f"empty adapter shape: d_in={d_in}, d_out={d_out}")
        rng = np.random.Generator(np.random.PCG64(seed))
        bound = 1.0 / np.sqrt(d_in)
        weight = rng.uniform(-bound, bound, size=(d_out, d_in)).astype(np.float32)
        bias = np.zeros(d_out, dtype=np.float32)
        return cls(weight=weight, bias=bias)

    def n_floats(self) -> int:
        """Retained float count (params + moments), for memory accounting."""
        return 3 * (self.weight.size + self.bias.size)


def _src_coords(n_out: int, n_in: int) -> np.ndarray:
    # pixel-center sampling with edge clamp (align_corners=False convention)
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(c, 0.0, n_in - 1.0)


def bilinear_resize(t: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize over the last two axes of a 2-d or 3-d array."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bad output size {out_h}x{out_w}")
    arr = np.asarray(t, dtype=np.float64)
    h, w = arr.shape[-2:]
    cy = _src_coords(out_h, h)
    cx = _src_coords(out_w, w)
    y0 = np.floor(cy).astype(np.int64)
    x0 = np.floor(cx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (cy - y0)[:, None]
    fx = (cx - x0)[None, :]
    tl = arr[..., y0[:, None], x0[None, :]]
    tr = arr[..., y0[:, None], x1[None, :]]
    bl = arr[..., y1[:, None], x0[None, :]]
    br = arr[..., y1[:, None], x1[None, :]]
    out = (tl * (1 - fy) * (1 - fx) + tr * (1 - fy) * fx
           + bl * fy * (1 - fx) + br * fy * fx)
    return out.astype(np.float32)


def fuse_scales(scales: list) -> np.ndarray:
    """Resize every scale to the grid of the first one and concatenate channels."""
    if not scales:
        raise ShapeError("fuse_scales needs at least one scale")
    first = as_tensor3(scales[0], "scale[0]")
    if len(scales) == 1:
        return first
    h, w = first.shape[1], first.shape[2]
    parts = [first]
    for i, s in enumerate(scales[1:], start=1):
        t = as_tensor3(s, f"scale[{i}]")
        if t.shape[1:] != (h, w):
            t = bilinear_resize(t, h, w)
        parts.append(t)
    return np.concatenate(parts, axis=0)


def add_coords(t: np.ndarray) -> np.ndarray:
    """Append x/y coordinate channels, each linearly spaced in [-1, 1]."""
    arr = as_tensor3(t, "features")
    _, h, w = arr.shape
    xs = np.linspace(-1.0, 1.0, w, dtype=np.float32) if w > 1 else np.zeros(w, np.float32)
    ys = np.linspace(-1.0, 1.0, h, dtype=np.float32) if h > 1 else np.zeros(h, np.float32)
    xc = np.broadcast_to(xs[None, :], (h, w))
    yc = np.broadcast_to(ys[:, None], (h, w))
    return np.concatenate([arr, xc[None], yc[None]], axis=0)


def project_forward(t: np.ndarray, params: AdapterParams) -> np.ndarray:
    """Apply ``weight @ t(:, i, j) + bias`` at every grid position."""
    arr = as_tensor3(t, "features")
    d_in, h, w = arr.shape
    if d_in != params.d_in:
        raise ShapeError(f"adapter expects {params.d_in} channels, got {d_in}")
    flat = arr.reshape(d_in, h * w).astype(np.float64)
    z = params.weight.astype(np.float64) @ flat + params.bias.astype(np.float64)[:, None]
    return z.reshape(params.d_out, h, w).astype(np.float32)


def project_backward(t: np.ndarray, grad_z: np.ndarray, params: AdapterParams):
    """Gradients of a scalar loss w.r.t. weight and bias.

    ``grad_z`` is the loss gradient at the projection output; returns
    ``(grad_weight, grad_bias)`` summed over all grid positions.
    """
    arr = as_tensor3(t, "features")
    gz = as_tensor3(grad_z, "grad_z")
    d_in, h, w = arr.shape
    if d_in != params.d_in:
        raise ShapeError(f"adapter expects {params.d_in} channels, got {d_in}")
    if gz.shape != (params.d_out, h, w):
        raise ShapeError(f"grad_z shape {gz.shape} != {(params.d_out, h, w)}")
    gz_flat = gz.reshape(params.d_out, h * w).astype(np.float64)
    t_flat = arr.reshape(d_in, h * w).astype(np.float64)
    grad_w = gz_flat @ t_flat.T
    grad_b = gz_flat.sum(axis=1)
    return grad_w.astype(np.float32), grad_b.astype(np.float32)
