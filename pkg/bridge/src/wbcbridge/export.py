"""Run a pretrained three-scale detector over images and dump raw head tensors.

The bridge is deliberately dumb: load image, letterbox to the network input,
forward pass, reshape each scale to [cell_y][cell_x][anchor][attribute], and
write the bytes.  No sigmoid, no thresholding, no NMS — all detection math
lives in the toolkit that consumes these files, where it is tested once.

The model is a TorchScript module mapping a (1, 3, S, S) float tensor in
[0, 1] to three feature maps of shape (1, b*(5+c), S/stride, S/stride) with
anchor-major channel grouping, the conventional detector head layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .wbct import SUFFIX, write_wbct

MANIFEST_NAME = "bridge_manifest.json"
PAD_GRAY = 128


class BridgeError(Exception):
    """Bad bridge configuration or a model that violates the head contract."""


@dataclass
class BridgeConfig:
    model_path: str
    images: list[str]
    output_dir: str
    input_size: int = 416
    num_classes: int = 4
    boxes_per_cell: int = 3
    strides: tuple[int, ...] = (32, 16, 8)

    @property
    def depth(self) -> int:
        return self.boxes_per_cell * (5 + self.num_classes)


def letterbox_image(img: Image.Image, size: int) -> np.ndarray:
    """Aspect-preserving resize onto a gray square canvas; float32 in [0, 1]."""
    scale = min(size / img.width, size / img.height)
    new_w = max(1, round(img.width * scale))
    new_h = max(1, round(img.height * scale))
    resized = img.convert("RGB").resize((new_w, new_h), Image.BILINEAR)
    canvas = Image.new("RGB", (size, size), (PAD_GRAY, PAD_GRAY, PAD_GRAY))
    canvas.paste(resized, ((size - new_w) // 2, (size - new_h) // 2))
    return np.asarray(canvas, dtype=np.float32) / 255.0


def _to_slot_layout(t: torch.Tensor, cfg: BridgeConfig) -> np.ndarray:
    """(1, b*(5+c), H, W) channel-major -> (H, W, b, 5+c) slot-major."""
    _, depth, h, w = t.shape
    attrs = 5 + cfg.num_classes
    a = t[0].reshape(cfg.boxes_per_cell, attrs, h, w)
    return a.permute(2, 3, 0, 1).contiguous().numpy()


def run_model(model, image: np.ndarray, cfg: BridgeConfig) -> list[np.ndarray]:
    """One deterministic forward pass; returns scale arrays, finest grid last."""
    x = torch.from_numpy(image).permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        outputs = model(x)
    if isinstance(outputs, torch.Tensor):
        outputs = [outputs]
    outputs = list(outputs)
    if len(outputs) != len(cfg.strides):
        raise BridgeError(f"model produced {len(outputs)} scales, expected {len(cfg.strides)}")

    expected_grids = [cfg.input_size // s for s in cfg.strides]
    by_grid = {}
    for t in outputs:
        if t.dim() != 4 or t.shape[0] != 1 or t.shape[2] != t.shape[3]:
            raise BridgeError(f"unexpected head shape {tuple(t.shape)}")
        if t.shape[1] != cfg.depth:
            raise BridgeError(
                f"head depth mismatch: expected {cfg.depth} "
                f"({cfg.boxes_per_cell}*(5+{cfg.num_classes})), got {t.shape[1]}"
            )
        by_grid[t.shape[2]] = t
    if sorted(by_grid) != sorted(expected_grids):
        raise BridgeError(
            f"model grids {sorted(by_grid)} do not match strides {cfg.strides} "
            f"at input {cfg.input_size} (expected {sorted(expected_grids)})"
        )
    return [_to_slot_layout(by_grid[g], cfg) for g in expected_grids]


def export_tensors(cfg: BridgeConfig) -> dict:
    """Dump one .wbct file per image plus a manifest; returns the manifest."""
    model_path = Path(cfg.model_path)
    if not model_path.is_file():
        raise BridgeError(f"model file {model_path} does not exist")
    model = torch.jit.load(str(model_path), map_location="cpu")
    model.eval()
    torch.set_num_threads(1)  # keeps re-exports bit-identical

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = {}
    for image_path in cfg.images:
        p = Path(image_path)
        if not p.is_file():
            raise BridgeError(f"image {p} does not exist")
        with Image.open(p) as img:
            pixels = letterbox_image(img, cfg.input_size)
        scales = run_model(model, pixels, cfg)
        blob = write_wbct(scales)
        name = p.stem + SUFFIX
        (out_dir / name).write_bytes(blob)
        entries[p.stem] = name

    manifest = {
        "model": str(model_path),
        "input_size": cfg.input_size,
        "num_classes": cfg.num_classes,
        "boxes_per_cell": cfg.boxes_per_cell,
        "strides": list(cfg.strides),
        "images": entries,
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
