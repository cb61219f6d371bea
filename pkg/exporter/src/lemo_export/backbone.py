"""Frozen wide residual backbone with intermediate-stage taps."""

from pathlib import Path

import numpy as np
import torch
from torchvision.models import wide_resnet50_2

from .errors import ExportError

STAGES = ("layer1", "layer2", "layer3", "layer4")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def build_backbone(weights: str) -> torch.nn.Module:
    """Construct the frozen encoder.

    ``weights`` selects the parameter source: ``"pretrained"`` pulls the
    published checkpoint, ``"random:SEED"`` draws a fixed random
    initialization (useful where no download is possible and only the
    plumbing is under test), and any other value is read as a path to a
    saved state dict.
    """
    if weights == "pretrained":
        from torchvision.models import Wide_ResNet50_2_Weights
        model = wide_resnet50_2(weights=Wide_ResNet50_2_Weights.IMAGENET1K_V1)
    elif weights.startswith("random:"):
        try:
            seed = int(weights.split(":", 1)[1])
        except ValueError as e:
            raise ExportError(f"bad weights spec {weights!r}: seed must be an integer") from e
        torch.manual_seed(seed)
        model = wide_resnet50_2(weights=None)
    else:
        p = Path(weights)
        if not p.is_file():
            raise ExportError(f"weights file not found: {p}")
        model = wide_resnet50_2(weights=None)
        model.load_state_dict(torch.load(p, map_location="cpu"))
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model


def tap_features(model: torch.nn.Module, batch: torch.Tensor,
                 layers: tuple[str, ...]) -> list[np.ndarray]:
    """Run the stem and residual stages, returning one (C, H, W) float32
    array per requested layer, in the requested order."""
    for name in layers:
        if name not in STAGES:
            raise ExportError(f"unknown layer {name!r}, expected one of {STAGES}")
    deepest = max(STAGES.index(name) for name in layers)
    grabbed: dict[str, np.ndarray] = {}
    with torch.no_grad():
        y = model.maxpool(model.relu(model.bn1(model.conv1(batch))))
        for stage in STAGES[:deepest + 1]:
            y = getattr(model, stage)(y)
            if stage in layers:
                grabbed[stage] = y[0].numpy().astype(np.float32)
    return [grabbed[name] for name in layers]
