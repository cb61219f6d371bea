import numpy as np
import pytest
from PIL import Image

from lemo_export.pipeline import ExportSpec, export_dataset

SIZE = 64


def _texture(rng, bright_square=None):
    arr = rng.integers(40, 200, size=(SIZE, SIZE, 3), dtype=np.uint8)
    ramp = np.linspace(0, 40, SIZE, dtype=np.uint8)[None, :, None]
    arr = np.clip(arr.astype(np.int16) + ramp, 0, 255).astype(np.uint8)
    if bright_square is not None:
        r0, c0, r1, c1 = bright_square
        arr[r0:r1, c0:c1] = 255
    return Image.fromarray(arr, mode="RGB")


def _mask_image(square):
    m = np.zeros((SIZE, SIZE), dtype=np.uint8)
    r0, c0, r1, c1 = square
    m[r0:r1, c0:c1] = 255
    return Image.fromarray(m, mode="L")


def make_dataset(root, class_name, n_train=6, n_test_good=2, n_defect=2,
                 seed=0):
    """Lay out <root>/<class>/{train/good, test/*, ground_truth/*} images."""
    rng = np.random.Generator(np.random.PCG64(seed))
    class_dir = root / class_name
    train = class_dir / "train" / "good"
    test_good = class_dir / "test" / "good"
    test_bad = class_dir / "test" / "scratch"
    gt = class_dir / "ground_truth" / "scratch"
    for d in (train, test_good, test_bad, gt):
        d.mkdir(parents=True, exist_ok=True)
    for i in range(n_train):
        _texture(rng).save(train / f"{i:03d}.png")
    for i in range(n_test_good):
        _texture(rng).save(test_good / f"{i:03d}.png")
    for i in range(n_defect):
        square = (24, 20 + 4 * i, 40, 44)  # interior, survives the center crop
        _texture(rng, bright_square=square).save(test_bad / f"{i:03d}.png")
        _mask_image(square).save(gt / f"{i:03d}_mask.png")
    return class_dir


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    make_dataset(root, "widget")
    return root


@pytest.fixture(scope="session")
def exported(toy_root, tmp_path_factory):
    out = tmp_path_factory.mktemp("export")
    spec = ExportSpec(root=toy_root, class_name="widget", out_dir=out,
                      weights="random:0")
    manifest_path = export_dataset(spec)
    return out, manifest_path
