"""Walk an image dataset, run the frozen backbone, emit tensors + manifest.

Expected layout under ``root/class_name``:

    train/good/*.png            normal training stream
    test/good/*.png             normal test images
    test/<defect>/*.png         anomalous test images
    ground_truth/<defect>/      one binary mask per anomalous image

The exporter writes one tensor file per tapped layer per image plus cropped
binary masks, and a manifest listing every record with labels and splits.
Scale fusion and coordinate channels are consumer responsibilities; files
here hold raw backbone activations only.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbone import IMAGENET_MEAN, IMAGENET_STD, STAGES, build_backbone, tap_features
from .errors import ExportError
from .tensor_out import write_tensor

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass(frozen=True)
class ExportSpec:
    root: Path
    class_name: str
    out_dir: Path
    layers: tuple[str, ...] = ("layer2", "layer3", "layer4")
    resize: int = 256
    crop: int = 224
    weights: str = "pretrained"

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ExportError("at least one layer must be tapped")
        for name in self.layers:
            if name not in STAGES:
                raise ExportError(f"unknown layer {name!r}, expected one of {STAGES}")
        if len(set(self.layers)) != len(self.layers):
            raise ExportError("duplicate layer names")
        if self.crop <= 0 or self.resize <= 0:
            raise ExportError("resize and crop must be positive")
        if self.crop > self.resize:
            raise ExportError(f"crop {self.crop} exceeds resize {self.resize}")


@dataclass(frozen=True)
class _Item:
    path: Path
    label: str
    split: str
    base: str
    mask_path: Path | None = None


def _image_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_EXTS)


def _find_mask(gt_dir: Path, stem: str) -> Path:
    for candidate in (gt_dir / f"{stem}_mask.png", gt_dir / f"{stem}.png"):
        if candidate.is_file():
            return candidate
    raise ExportError(f"no mask for anomalous image {stem!r} under {gt_dir}")


def collect_items(root: Path, class_name: str) -> list[_Item]:
    """Enumerate the dataset in stream order: training images first, then
    test groups alphabetically. Anomalous test images must have a mask."""
    class_dir = Path(root) / class_name
    if not class_dir.is_dir():
        raise ExportError(f"class directory not found: {class_dir}")
    train_dir = class_dir / "train" / "good"
    test_dir = class_dir / "test"
    if not train_dir.is_dir():
        raise ExportError(f"missing {train_dir}")
    if not test_dir.is_dir():
        raise ExportError(f"missing {test_dir}")

    items = [_Item(path=p, label="normal", split="train-stream",
                   base=f"train_good_{p.stem}")
             for p in _image_files(train_dir)]
    for group_dir in sorted(p for p in test_dir.iterdir() if p.is_dir()):
        group = group_dir.name
        for p in _image_files(group_dir):
            if group == "good":
                items.append(_Item(path=p, label="normal", split="test",
                                   base=f"test_good_{p.stem}"))
            else:
                mask = _find_mask(class_dir / "ground_truth" / group, p.stem)
                items.append(_Item(path=p, label="anomalous", split="test",
                                   base=f"test_{group}_{p.stem}", mask_path=mask))
    if not items:
        raise ExportError(f"no images found under {class_dir}")
    return items


def preprocess_image(img: Image.Image, resize: int, crop: int) -> torch.Tensor:
    """Square bilinear resize, center crop, scale to [0, 1], normalize with
    the backbone's pretraining statistics. Returns a (1, 3, crop, crop)
    float32 batch."""
    img = img.convert("RGB").resize((resize, resize), Image.Resampling.BILINEAR)
    left = (resize - crop) // 2
    img = img.crop((left, left, left + crop, left + crop))
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(IMAGENET_MEAN, dtype=np.float32)) \
        / np.asarray(IMAGENET_STD, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def load_mask(path: Path, resize: int, crop: int) -> np.ndarray:
    """Load a ground-truth mask as a binary (crop, crop) float32 grid.

    Nearest-neighbor resampling keeps the mask binary; any nonzero source
    pixel marks defect. A mask with no defect pixels (before or after the
    crop) is a dataset error, not a skippable condition."""
    img = Image.open(path).convert("L")
    if not np.asarray(img).any():
        raise ExportError(f"mask is all zeros: {path}")
    img = img.resize((resize, resize), Image.Resampling.NEAREST)
    left = (resize - crop) // 2
    img = img.crop((left, left, left + crop, left + crop))
    mask = (np.asarray(img) > 0).astype(np.float32)
    if not mask.any():
        raise ExportError(f"mask has no defect pixels left after crop: {path}")
    return mask


def export_dataset(spec: ExportSpec) -> Path:
    """Export one class; returns the manifest path.

    Deterministic given fixed weights: re-running with the same spec
    produces bitwise-identical tensor files. Unreadable images are skipped
    with a warning and left out of the manifest."""
    items = collect_items(spec.root, spec.class_name)
    model = build_backbone(spec.weights)
    feats_dir = spec.out_dir / "feats"
    feats_dir.mkdir(parents=True, exist_ok=True)

    records: list[dict] = []
    scale_channels: list[int] | None = None
    for item in items:
        try:
            with Image.open(item.path) as img:
                batch = preprocess_image(img, spec.resize, spec.crop)
        except (OSError, Image.UnidentifiedImageError) as e:
            warnings.warn(f"skipping unreadable image {item.path}: {e}")
            continue
        taps = tap_features(model, batch, spec.layers)
        if scale_channels is None:
            scale_channels = [t.shape[0] for t in taps]
        rel_paths = []
        for layer, t in zip(spec.layers, taps):
            rel = f"feats/{item.base}_{layer}.tensor"
            write_tensor(spec.out_dir / rel, t)
            rel_paths.append(rel)
        record = {"label": item.label, "split": item.split, "scale_paths": rel_paths}
        if item.mask_path is not None:
            mask = load_mask(item.mask_path, spec.resize, spec.crop)
            rel = f"feats/{item.base}_mask.tensor"
            write_tensor(spec.out_dir / rel, mask)
            record["mask_path"] = rel
        records.append(record)

    if not records:
        raise ExportError("every image was unreadable, nothing to export")
    manifest = {
        "records": records,
        "orig_hw": [spec.crop, spec.crop],
        "meta": {
            "class_name": spec.class_name,
            "layers": list(spec.layers),
            "scale_channels": scale_channels,
            "resize": spec.resize,
            "crop": spec.crop,
            "interpolation": "bilinear",
            "weights": spec.weights,
        },
    }
    manifest_path = spec.out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path
