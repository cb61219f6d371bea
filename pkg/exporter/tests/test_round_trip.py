"""Exported files must drive the detector end to end, untouched."""

import json
import math

import numpy as np
from lemo.cli import main as lemo_main
from lemo.feature_io import load_frame, load_manifest, read_tensor
from lemo.patch_adapter import add_coords, fuse_scales


def test_every_emitted_file_passes_consumer_validation(exported):
    out, _ = exported
    files = sorted((out / "feats").iterdir())
    assert len(files) == 10 * 3 + 2  # three scales per image plus two masks
    for path in files:
        t = read_tensor(path)
        assert np.isfinite(t).all(), path


def test_manifest_loads_with_mask_requirements(exported):
    _, manifest_path = exported
    manifest = load_manifest(manifest_path, require_masks=True)
    assert len(manifest.train_records()) == 6
    assert len(manifest.test_records()) == 4


def test_scale_channels_sum_to_adapter_width(exported):
    _, manifest_path = exported
    manifest = load_manifest(manifest_path)
    frame = load_frame(manifest, 0)
    fused = add_coords(fuse_scales(frame.scales))
    assert fused.shape[0] == sum(manifest.meta["scale_channels"]) + 2


def test_full_run_on_exported_class(exported, tmp_path, capsys):
    _, manifest_path = exported
    config = {"seed": 0, "source": {"manifest": str(manifest_path)}}
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config), encoding="utf-8")
    out = tmp_path / "run"

    assert lemo_main(["run", str(cfg_path), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    metrics = report["metrics"]
    ok = (report["stream"]["n_frames"] == 6
          and all(metrics[k] is not None and math.isfinite(metrics[k])
                  for k in ("i_auroc", "p_auroc", "p_aupro")))
    print(f"[acceptance] exporter round trip: {'PASS' if ok else 'FAIL'} "
          f"(6-frame run on exported features, I-AUROC {metrics['i_auroc']:.4f}, "
          f"P-AUROC {metrics['p_auroc']:.4f}, P-AUPRO {metrics['p_aupro']:.4f})")
    assert ok
