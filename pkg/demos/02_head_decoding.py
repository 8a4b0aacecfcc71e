#!/usr/bin/env python3
"""Decoding raw detection-head activations into boxes.

A head slot holds (t_x, t_y, t_w, t_h, t_obj, class logits...).  Sigmoids pin
the center inside its grid cell, exponentials scale the anchor priors, and
the whole map is invertible, which is what makes planted-object testing
possible.
"""

import numpy as np

from wbcdetect import AnchorBox, GridTensor, HeadSpec, decode_cell, decode_grid, encode_cell

# -- one cell ----------------------------------------------------------
anchor = AnchorBox(10, 20)
zero = decode_cell([0, 0, 0, 0, 0, 0], cell=(0, 0), anchor=anchor, stride=32)
print("all-zero slot decodes to the cell midpoint with the anchor's size:")
print("  center:", (zero.box.cx, zero.box.cy), " size:", (zero.box.w, zero.box.h))
print("  objectness:", zero.objectness)

doubled = decode_cell([0, 0, np.log(2), 0, 0, 0], (0, 0), anchor, 32)
print("t_w = ln 2 doubles the anchor width:", doubled.box.w)

saturated = decode_cell([50, -50, 0, 0, 0, 0], cell=(3, 2), anchor=anchor, stride=32)
print("even saturated logits stay inside cell (3,2):", (saturated.box.cx, saturated.box.cy))

# -- round trip --------------------------------------------------------
t = np.array([0.3, -1.2, 0.8, -0.5, 2.0, -1.0])
d = decode_cell(t, (5, 7), anchor, 16)
back = encode_cell(d, anchor, 16)
print("\nencode(decode(t)) recovers t:", np.max(np.abs(back - t)) < 1e-9)

# -- a full scale ------------------------------------------------------
# The single-class head has depth 3*(5+1) = 18; the subtype head 3*(5+4) = 27.
spec = HeadSpec(num_classes=1)
print("\nhead depths: one class ->", HeadSpec(num_classes=1).depth, ", four ->", HeadSpec(num_classes=4).depth)

grid = GridTensor(0, np.zeros((13, 13, 3, 6)))
dets = decode_grid(grid, spec)
print(f"13x13 grid with 3 slots per cell decodes to {len(dets)} candidates")
