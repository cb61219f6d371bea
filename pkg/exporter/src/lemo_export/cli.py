"""Command line entry: export one dataset class to tensors + manifest."""

import argparse
import sys

from .errors import ExportError
from .pipeline import ExportSpec, export_dataset


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lemo-export",
        description="Convert an image dataset class into backbone feature "
                    "tensors with a stream manifest.")
    ap.add_argument("--root", required=True, help="dataset root directory")
    ap.add_argument("--class", dest="class_name", required=True,
                    help="class subdirectory to export")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--layers", nargs="+", default=["layer2", "layer3", "layer4"],
                    help="backbone stages to tap")
    ap.add_argument("--resize", type=int, default=256)
    ap.add_argument("--crop", type=int, default=224)
    ap.add_argument("--weights", default="pretrained",
                    help="pretrained | random:SEED | path to a state dict")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExportSpec(root=args.root, class_name=args.class_name,
                          out_dir=args.out, layers=tuple(args.layers),
                          resize=args.resize, crop=args.crop,
                          weights=args.weights)
        manifest_path = export_dataset(spec)
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {manifest_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
