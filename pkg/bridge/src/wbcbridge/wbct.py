"""Standalone writer for the .wbct tensor interchange format.

Implemented here from the format contract rather than imported from the
detection toolkit, so bridge output genuinely exercises the toolkit's reader:

    magic   4 bytes  "WBCT"
    version u16      1          (little-endian)
    endian  u8       0 = little
    scales  u8       number of scale blocks
    per scale: grid_h u32, grid_w u32, depth u32
    payload          float32 little-endian, [cell_y][cell_x][anchor][attr]
    crc32   u32      checksum of the payload bytes
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"WBCT"
VERSION = 1
SUFFIX = ".wbct"


def write_wbct(scale_arrays) -> bytes:
    """Serialize per-scale arrays of shape (grid_h, grid_w, anchors, attrs)."""
    arrays = [np.asarray(a) for a in scale_arrays]
    if not 0 < len(arrays) <= 255:
        raise ValueError(f"scale count {len(arrays)} outside 1..255")
    header = bytearray(MAGIC)
    header += struct.pack("<HBB", VERSION, 0, len(arrays))
    payload = bytearray()
    for a in arrays:
        if a.ndim != 4:
            raise ValueError(f"scale array must be 4-d, got shape {a.shape}")
        grid_h, grid_w, anchors, attrs = a.shape
        header += struct.pack("<III", grid_h, grid_w, anchors * attrs)
        payload += np.ascontiguousarray(a, dtype="<f4").tobytes()
    crc = zlib.crc32(bytes(payload))
    return bytes(header) + bytes(payload) + struct.pack("<I", crc)
