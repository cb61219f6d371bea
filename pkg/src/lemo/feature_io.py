"""Portable binary tensor files and the JSON dataset manifest.

Tensor file layout (all little-endian):

    magic   4 bytes  b"LEMO"
    version u16      1
    dtype   u8       0 = float32
    ndim    u8       2 or 3
    dims    ndim x u32
    payload prod(dims) x 4 bytes, float32

The payload is bit-exact: write followed by read returns the identical
bytes.  The manifest is a UTF-8 JSON document listing stream records in
file order; record paths resolve relative to the manifest's directory.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError, TensorFormatError
from .patch_adapter import StreamFrame

MAGIC = b"LEMO"
VERSION = 1
DTYPE_F32 = 0

LABELS = ("normal", "anomalous", "unlabeled")
SPLITS = ("train-stream", "test")


def write_tensor(path, t: np.ndarray) -> None:
    """Write a 2-d or 3-d float32 array; payload round-trips bitwise."""
    arr = np.ascontiguousarray(t, dtype=np.float32)
    if arr.ndim not in (2, 3):
        raise TensorFormatError(f"only 2-d or 3-d tensors are stored, got ndim={arr.ndim}")
    if not np.isfinite(arr).all():
        raise NumericalError("refusing to write non-finite entries")
    header = MAGIC + struct.pack("<HBB", VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.astype("<f4").tobytes())


def read_tensor_header(path):
    """Return the dims tuple without reading the payload."""
    with open(path, "rb") as f:
        head = f.read(8)
        if len(head) < 8 or head[:4] != MAGIC:
            raise TensorFormatError(f"{path}: bad magic")
        version, dtype, ndim = struct.unpack("<HBB", head[4:8])
        if version != VERSION:
            raise TensorFormatError(f"{path}: unsupported version {version}")
        if dtype != DTYPE_F32:
            raise TensorFormatError(f"{path}: unsupported dtype code {dtype}")
        if ndim not in (2, 3):
            raise TensorFormatError(f"{path}: unsupported ndim {ndim}")
        raw = f.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise TensorFormatError(f"{path}: truncated dims")
        return struct.unpack(f"<{ndim}I", raw)


def read_tensor(path) -> np.ndarray:
    """Inverse of :func:`write_tensor`."""
    dims = read_tensor_header(path)
    count = int(np.prod(dims))
    offset = 8 + 4 * len(dims)
    with open(path, "rb") as f:
        f.seek(offset)
        payload = f.read(4 * count)
        if len(payload) != 4 * count:
            raise TensorFormatError(f"{path}: truncated payload "
                                    f"({len(payload)} of {4 * count} bytes)")
        if f.read(1):
            raise TensorFormatError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


@dataclass
class ManifestRecord:
    label: str
    split: str
    feature_path: str | None = None
    scale_paths: list[str] | None = None
    mask_path: str | None = None

    def paths(self) -> list[str]:
        return list(self.scale_paths) if self.scale_paths else [self.feature_path]


@dataclass
class Manifest:
    root: Path
    records: list[ManifestRecord]
    orig_hw: tuple[int, int] | None = None
    meta: dict = field(default_factory=dict)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def train_records(self) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == "train-stream"]

    def test_records(self) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == "test"]


def _parse_record(i: int, raw: dict) -> ManifestRecord:
    label = raw.get("label")
    split = raw.get("split")
    if label not in LABELS:
        raise ConfigError(f"record {i}: label must be one of {LABELS}, got {label!r}")
    if split not in SPLITS:
        raise ConfigError(f"record {i}: split must be one of {SPLITS}, got {split!r}")
    feature_path = raw.get("feature_path")
    scale_paths = raw.get("scale_paths")
    if bool(feature_path) == bool(scale_paths):
        raise ConfigError(f"record {i}: exactly one of feature_path/scale_paths required")
    return ManifestRecord(label=label, split=split, feature_path=feature_path,
                          scale_paths=scale_paths, mask_path=raw.get("mask_path"))


def load_manifest(path, require_masks: bool = False) -> Manifest:
    """Load and eagerly validate a manifest; record order is stream order."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"manifest not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON ({e})") from e
    raw_records = doc.get("records")
    if not isinstance(raw_records, list) or not raw_records:
        raise ConfigError(f"{p}: manifest must contain a nonempty 'records' list")
    orig_hw = tuple(doc["orig_hw"]) if "orig_hw" in doc else None
    records = [_parse_record(i, r) for i, r in enumerate(raw_records)]
    manifest = Manifest(root=p.parent, records=records, orig_hw=orig_hw,
                        meta=doc.get("meta", {}))
    for i, rec in enumerate(records):
        for rel in rec.paths() + ([rec.mask_path] if rec.mask_path else []):
            if not manifest.resolve(rel).is_file():
                raise ConfigError(f"record {i}: unresolvable path {rel!r}")
        if require_masks and rec.split == "test" and rec.label == "anomalous":
            if rec.mask_path is None:
                raise ConfigError(f"record {i}: anomalous test record needs mask_path "
                                  "when pixel metrics are requested")
            dims = read_tensor_header(manifest.resolve(rec.mask_path))
            if orig_hw is not None and tuple(dims) != orig_hw:
                raise ConfigError(f"record {i}: mask dims {dims} != orig_hw {orig_hw}")
    return manifest


def save_manifest(path, records: list[dict], orig_hw=None, meta=None) -> None:
    doc = {"records": records}
    if orig_hw is not None:
        doc["orig_hw"] = list(orig_hw)
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def load_frame(manifest: Manifest, index: int) -> StreamFrame:
    """Materialize one manifest record as a StreamFrame."""
    rec = manifest.records[index]
    scales = []
    for rel in rec.paths():
        arr = read_tensor(manifest.resolve(rel))
        if arr.ndim == 2:
            arr = arr[None]
        scales.append(arr)
    mask = None
    if rec.mask_path:
        mask = read_tensor(manifest.resolve(rec.mask_path))
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ConfigError(f"record {index}: mask is not binary")
    return StreamFrame(scales=scales, label=rec.label, mask=mask, frame_idx=index)
