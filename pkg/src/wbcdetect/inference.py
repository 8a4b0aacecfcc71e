"""Backbone abstraction: anything that turns an image reference into per-scale
head tensors.

Two implementations ship with the toolkit: a deterministic synthetic backbone
that plants known objects into otherwise-noise tensors (so the full decode,
suppression, and evaluation path is testable without any trained network),
and a loader for the ``.wbct`` binary interchange files a real model exporter
writes.

Tensor interchange format (all integers little-endian):

    magic   4 bytes  "WBCT"
    version u16      1
    endian  u8       0 = little (the only defined value)
    scales  u8       number of scale blocks
    per scale: grid_h u32, grid_w u32, depth u32
    payload          float32 values per scale, [y][x][anchor][attr] order
    crc32   u32      checksum of the payload bytes
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import (
    ConfigError,
    ShapeError,
    TensorFileCrcError,
    TensorFileEndiannessError,
    TensorFileLengthError,
    TensorFileMagicError,
    TensorFileVersionError,
)
from .geometry import PIXEL_NETWORK, Box
from .head import GridTensor, HeadSpec, RawDetection, encode_cell

MAGIC = b"WBCT"
VERSION = 1
TENSOR_SUFFIX = ".wbct"


class BackboneAdapter(Protocol):
    def infer(self, image_id: str, spec: HeadSpec) -> list[GridTensor]: ...


@dataclass(frozen=True)
class PlantedObject:
    """A ground-truth object the toy backbone will make recoverable.

    The box is in the network-pixel frame; the decoded detection will carry
    confidence objectness * class_score (0.931 with the defaults).
    """

    image_id: str
    box: Box
    class_id: int
    objectness: float = 0.98
    class_score: float = 0.95


def _co_centered_iou(w1: float, h1: float, w2: float, h2: float) -> float:
    inter = min(w1, w2) * min(h1, h2)
    return inter / (w1 * h1 + w2 * h2 - inter)


class ToyBackbone:
    """Deterministic synthetic backbone.

    Every slot starts as low-magnitude seeded noise (|t| <= 0.1) with the
    objectness logit pushed to -6 +- 0.5, so nothing spurious survives a 0.20
    confidence threshold.  Each plant is written through the head encoder
    into the cell of the scale whose anchor best matches its size.
    """

    def __init__(self, seed: int = 0, plants=()):
        self.seed = int(seed)
        self._plants: dict[str, list[PlantedObject]] = {}
        for p in plants:
            self._plants.setdefault(p.image_id, []).append(p)

    def infer(self, image_id: str, spec: HeadSpec) -> list[GridTensor]:
        rng = np.random.default_rng([self.seed, zlib.crc32(image_id.encode("utf-8"))])
        tensors = []
        for si in range(len(spec.strides)):
            g = spec.grid_size(si)
            t = rng.uniform(-0.1, 0.1, size=(g, g, spec.boxes_per_cell, spec.attrs_per_box))
            t[..., 4] = -6.0 + rng.uniform(-0.5, 0.5, size=t.shape[:3])
            tensors.append(t)

        for plant in self._plants.get(image_id, ()):
            self._write_plant(tensors, plant, spec)

        return [
            GridTensor(si, t.astype(np.float32)) for si, t in enumerate(tensors)
        ]

    def _write_plant(self, tensors, plant: PlantedObject, spec: HeadSpec) -> None:
        b = plant.box
        if b.frame != PIXEL_NETWORK:
            raise ConfigError(f"plant {plant.image_id} box must be in {PIXEL_NETWORK}")
        if not (0 <= b.cx < spec.input_size and 0 <= b.cy < spec.input_size):
            raise ConfigError(
                f"plant {plant.image_id} center ({b.cx}, {b.cy}) outside "
                f"{spec.input_size}px network frame"
            )
        if not 0 <= plant.class_id < spec.num_classes:
            raise ConfigError(f"plant class {plant.class_id} outside {spec.num_classes} classes")

        best = max(
            range(len(spec.anchors)),
            key=lambda i: _co_centered_iou(b.w, b.h, spec.anchors[i].pw, spec.anchors[i].ph),
        )
        si, ai = divmod(best, spec.boxes_per_cell)
        stride = spec.strides[si]
        grid = spec.grid_size(si)
        cell_x = min(int(b.cx // stride), grid - 1)
        cell_y = min(int(b.cy // stride), grid - 1)
        # Nudge centers off cell boundaries so the logit is defined; the shift
        # is at most stride * 1e-6 pixels.
        fx = min(max(b.cx / stride - cell_x, 1e-6), 1.0 - 1e-6)
        fy = min(max(b.cy / stride - cell_y, 1e-6), 1.0 - 1e-6)
        planted_box = Box((cell_x + fx) * stride, (cell_y + fy) * stride, b.w, b.h, PIXEL_NETWORK)
        probs = tuple(
            plant.class_score if c == plant.class_id else 0.02 for c in range(spec.num_classes)
        )
        vec = encode_cell(
            RawDetection(planted_box, plant.objectness, probs, si, (cell_x, cell_y), ai),
            spec.anchors[best],
            stride,
        )
        tensors[si][cell_y, cell_x, ai, :] = vec


def write_tensor_file(tensors) -> bytes:
    """Serialize per-scale tensors; bit-exact round trip with read_tensor_file."""
    tensors = list(tensors)
    if not 0 < len(tensors) <= 255:
        raise ConfigError(f"scale count {len(tensors)} outside 1..255")
    header = bytearray(MAGIC)
    header += struct.pack("<HBB", VERSION, 0, len(tensors))
    payload = bytearray()
    for t in tensors:
        header += struct.pack("<III", t.grid_h, t.grid_w, t.depth)
        payload += np.ascontiguousarray(t.values, dtype="<f4").tobytes()
    crc = zlib.crc32(bytes(payload))
    return bytes(header) + bytes(payload) + struct.pack("<I", crc)


def read_tensor_file(data: bytes, spec: HeadSpec) -> list[GridTensor]:
    """Parse and validate a tensor interchange blob against a head layout.

    Distinct errors: bad magic, unsupported version, unsupported endianness,
    shape disagreement with the head layout, truncated/oversized payload, and
    CRC mismatch.  A corrupt file never yields a partial result.
    """
    if len(data) < 8:
        raise TensorFileLengthError(f"file too short for header: {len(data)} bytes")
    if data[:4] != MAGIC:
        raise TensorFileMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, endian, scale_count = struct.unpack("<HBB", data[4:8])
    if version != VERSION:
        raise TensorFileVersionError(f"unsupported version {version}, expected {VERSION}")
    if endian != 0:
        raise TensorFileEndiannessError(f"unsupported endianness marker {endian}")
    if scale_count != len(spec.strides):
        raise ShapeError(f"file has {scale_count} scales, spec expects {len(spec.strides)}")

    dims_end = 8 + 12 * scale_count
    if len(data) < dims_end:
        raise TensorFileLengthError("file truncated inside the scale table")
    dims = []
    payload_len = 0
    for si in range(scale_count):
        gh, gw, depth = struct.unpack_from("<III", data, 8 + 12 * si)
        want_g = spec.grid_size(si)
        if depth != spec.depth:
            raise ShapeError(f"scale {si}: expected depth {spec.depth}, got {depth}")
        if gh != want_g or gw != want_g:
            raise ShapeError(f"scale {si}: expected {want_g}x{want_g} grid, got {gh}x{gw}")
        dims.append((gh, gw))
        payload_len += gh * gw * depth * 4

    want_total = dims_end + payload_len + 4
    if len(data) != want_total:
        raise TensorFileLengthError(
            f"declared dims need {want_total} bytes, file has {len(data)}"
        )
    payload = data[dims_end : dims_end + payload_len]
    (crc_stored,) = struct.unpack_from("<I", data, dims_end + payload_len)
    if zlib.crc32(payload) != crc_stored:
        raise TensorFileCrcError("payload checksum mismatch")

    tensors = []
    offset = 0
    for si, (gh, gw) in enumerate(dims):
        count = gh * gw * spec.depth
        values = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(
            gh, gw, spec.boxes_per_cell, spec.attrs_per_box
        )
        offset += count * 4
        tensors.append(GridTensor(si, values.copy()))
    return tensors


class TensorDirBackbone:
    """Backbone that replays exported ``<image_id>.wbct`` files from a directory."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def infer(self, image_id: str, spec: HeadSpec) -> list[GridTensor]:
        path = self.directory / f"{image_id}{TENSOR_SUFFIX}"
        return read_tensor_file(path.read_bytes(), spec)


# Kept for symmetry with the adapter protocol: the toy backbone exposed as a
# plain function.
def toy_infer(tb: ToyBackbone, image_id: str, spec: HeadSpec) -> list[GridTensor]:
    return tb.infer(image_id, spec)
