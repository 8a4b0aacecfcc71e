#!/usr/bin/env python3
"""Boxes, frames, IoU, and letterboxing.

Every box carries the coordinate frame it lives in.  Blood smear images are
320x240, the network eats a 416x416 square, and detection math happens on
head grids; keeping the frame explicit is what stops those unit systems from
silently leaking into each other.
"""

from wbcdetect import Box, LetterboxMap, iou, letterbox_backward, letterbox_forward
from wbcdetect.geometry import FLIP_H, ROT90, apply_augment, noise, transformed_dims

# -- IoU ---------------------------------------------------------------
a = Box.from_corners(0, 0, 2, 2)
b = Box.from_corners(1, 0, 3, 2)
print("IoU of unit-overlap squares:", iou(a, b))  # 2 / 6
print("IoU of a box with itself:  ", iou(a, a))

# -- letterboxing ------------------------------------------------------
# A 320x240 image scales by min(416/320, 416/240) = 1.3 and picks up a
# 52 px band above and below.
m = LetterboxMap.fit(320, 240, 416)
print(f"\nletterbox 320x240 -> 416: scale={m.scale}, pad=({m.pad_x}, {m.pad_y})")

cell = Box(160, 120, 40, 40)  # centered box in source pixels
on_canvas = letterbox_forward(m, cell)
print("forward :", (on_canvas.cx, on_canvas.cy, on_canvas.w, on_canvas.h))
back = letterbox_backward(m, on_canvas)
print("backward:", (back.cx, back.cy, back.w, back.h))

# -- augmentation bookkeeping -----------------------------------------
# Flips and quarter turns move boxes; photometric noise never does.
boxes = [Box(100, 120, 40, 30)]
[flipped] = apply_augment(FLIP_H, (320, 240), boxes)
print("\nflip-h moves center:", (boxes[0].cx, boxes[0].cy), "->", (flipped.cx, flipped.cy))

[turned] = apply_augment(ROT90, (320, 240), boxes)
print("rot90 swaps box dims:", (boxes[0].w, boxes[0].h), "->", (turned.w, turned.h))
print("rot90 swaps image dims:", (320, 240), "->", transformed_dims(ROT90, (320, 240)))

[unmoved] = apply_augment(noise(seed=7, sigma=5.0), (320, 240), boxes)
print("noise leaves boxes alone:", unmoved == boxes[0])
