"""Writer for the detector's binary tensor files.

Layout (all little-endian): magic ``LEMO``, u16 version 1, u8 dtype code
(0 = float32), u8 ndim (2 or 3), ndim u32 dims, then the float32 payload.
The exporter only ever writes this format; reading belongs to the consumer.
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"LEMO"
VERSION = 1
DTYPE_F32 = 0


def write_tensor(path, t: np.ndarray) -> None:
    """Atomically write a 2-d or 3-d float32 array."""
    arr = np.ascontiguousarray(t, dtype=np.float32)
    if arr.ndim not in (2, 3):
        raise ExportError(f"only 2-d or 3-d tensors are stored, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        raise ExportError("refusing to write non-finite entries")
    header = MAGIC + struct.pack("<HBB", VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(arr.astype("<f4").tobytes())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
