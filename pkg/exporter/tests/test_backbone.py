import numpy as np
import pytest
import torch

from lemo_export.backbone import build_backbone, tap_features
from lemo_export.errors import ExportError


@pytest.fixture(scope="module")
def model():
    return build_backbone("random:0")


@pytest.fixture(scope="module")
def batch():
    g = torch.Generator().manual_seed(9)
    return torch.randn(1, 3, 224, 224, generator=g)


def test_model_is_frozen_and_in_eval_mode(model):
    assert not model.training
    assert all(not p.requires_grad for p in model.parameters())


def test_tap_shapes(model, batch):
    taps = tap_features(model, batch, ("layer2", "layer3", "layer4"))
    assert [t.shape for t in taps] == [(512, 28, 28), (1024, 14, 14), (2048, 7, 7)]
    assert all(t.dtype == np.float32 for t in taps)


def test_tap_order_follows_request(model, batch):
    fwd = tap_features(model, batch, ("layer2", "layer4"))
    rev = tap_features(model, batch, ("layer4", "layer2"))
    assert fwd[0].shape[0] == 512 and rev[0].shape[0] == 2048
    assert (fwd[0] == rev[1]).all() and (fwd[1] == rev[0]).all()


def test_same_seed_reproduces_features(model, batch):
    other = build_backbone("random:0")
    a = tap_features(model, batch, ("layer2",))[0]
    b = tap_features(other, batch, ("layer2",))[0]
    assert a.tobytes() == b.tobytes()


def test_different_seeds_differ(model, batch):
    other = build_backbone("random:1")
    a = tap_features(model, batch, ("layer2",))[0]
    b = tap_features(other, batch, ("layer2",))[0]
    assert not np.array_equal(a, b)


def test_state_dict_path_round_trip(model, batch, tmp_path):
    ckpt = tmp_path / "weights.pt"
    torch.save(model.state_dict(), ckpt)
    loaded = build_backbone(str(ckpt))
    a = tap_features(model, batch, ("layer3",))[0]
    b = tap_features(loaded, batch, ("layer3",))[0]
    assert a.tobytes() == b.tobytes()


def test_bad_weight_specs():
    with pytest.raises(ExportError):
        build_backbone("random:not-a-seed")
    with pytest.raises(ExportError):
        build_backbone("/no/such/checkpoint.pt")


def test_unknown_layer_rejected(model, batch):
    with pytest.raises(ExportError):
        tap_features(model, batch, ("layer9",))
