#!/usr/bin/env python3
"""The .wbct tensor interchange format.

A real model exporter dumps its three raw head tensors per image into one
binary file; the toolkit decodes them exactly as it decodes the toy
backbone's.  The format is little-endian float32 with declared dims and a
trailing CRC32, so any truncation or bit rot is caught before decoding.
"""

import tempfile
from pathlib import Path

from wbcdetect import HeadSpec, TensorDirBackbone, ToyBackbone, read_tensor_file, write_tensor_file
from wbcdetect.errors import TensorFileCrcError

spec = HeadSpec(num_classes=4)
tensors = ToyBackbone(seed=1).infer("demo_image", spec)
print("per-scale grids:", [(t.grid_h, t.grid_w, t.depth) for t in tensors])

blob = write_tensor_file(tensors)
print(f"serialized to {len(blob)} bytes (magic {blob[:4]!r})")

back = read_tensor_file(blob, spec)
print("bit-exact round trip:", all((a.values == b.values).all() for a, b in zip(tensors, back)))

# flip one payload bit: the CRC refuses the file
corrupt = bytearray(blob)
corrupt[len(blob) // 2] ^= 0x04
try:
    read_tensor_file(bytes(corrupt), spec)
except TensorFileCrcError as e:
    print("corrupted file rejected:", e)

# the directory backbone replays exported files by image id
d = Path(tempfile.mkdtemp(prefix="wbct_"))
(d / "demo_image.wbct").write_bytes(blob)
replayed = TensorDirBackbone(d).infer("demo_image", spec)
print("replay from disk matches:", all((a.values == b.values).all() for a, b in zip(tensors, replayed)))
