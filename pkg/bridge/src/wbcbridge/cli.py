"""Command line for the tensor bridge."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import BridgeConfig, BridgeError, export_tensors

IMAGE_SUFFIXES = (".jpeg", ".jpg", ".png")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wbc-tensor-bridge",
        description="Export raw detector head tensors as .wbct files, one per image.",
    )
    parser.add_argument("--model", required=True, help="TorchScript model file")
    parser.add_argument("--images", nargs="*", default=[], help="image files")
    parser.add_argument("--image-dir", help="directory of images (jpeg/jpg/png)")
    parser.add_argument("--input-size", type=int, default=416)
    parser.add_argument("--num-classes", type=int, default=4)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    images = list(args.images)
    if args.image_dir:
        images.extend(
            str(p)
            for p in sorted(Path(args.image_dir).iterdir())
            if p.suffix.lower() in IMAGE_SUFFIXES
        )
    if not images:
        print("error: no images given", file=sys.stderr)
        return 2

    cfg = BridgeConfig(
        model_path=args.model,
        images=images,
        output_dir=args.out,
        input_size=args.input_size,
        num_classes=args.num_classes,
    )
    try:
        manifest = export_tensors(cfg)
    except (BridgeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"exported {len(manifest['images'])} file(s) to {args.out}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
