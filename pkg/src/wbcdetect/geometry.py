"""Coordinate frames, box algebra, IoU, letterbox mapping, and box-level augmentation.

Boxes are axis-aligned rectangles in center form, tagged with the coordinate
frame they live in.  Mixing frames silently is the classic source of
off-by-a-stride bugs in detection pipelines, so every cross-box operation
checks frames and raises instead of guessing.

Frames:
    PIXEL_ORIGINAL -- pixels of the source image (e.g. 320x240 blood smears)
    PIXEL_NETWORK  -- pixels of the square, letterboxed network input
    grid_scale(s)  -- grid-cell units of the detection head at stride ``s``
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, FrameMismatchError, OutOfBoundsError


@dataclass(frozen=True, slots=True)
class Frame:
    """A named coordinate system; ``stride`` is set for grid frames only."""

    kind: str
    stride: int | None = None


PIXEL_ORIGINAL = Frame("pixel_original")
PIXEL_NETWORK = Frame("pixel_network")


def grid_scale(stride: int) -> Frame:
    """Frame of head-grid cell units at the given stride."""
    return Frame("grid", stride)


@dataclass(frozen=True, slots=True)
class Box:
    """Axis-aligned rectangle in center form: center (cx, cy), size (w, h)."""

    cx: float
    cy: float
    w: float
    h: float
    frame: Frame = PIXEL_ORIGINAL

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(
        cls,
        x_min: float,
        y_min: float,
        x_max: float,
        y_max: float,
        frame: Frame = PIXEL_ORIGINAL,
    ) -> "Box":
        return cls(
            (x_min + x_max) / 2.0,
            (y_min + y_max) / 2.0,
            x_max - x_min,
            y_max - y_min,
            frame,
        )

    def to_corners(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max); exact inverse of from_corners."""
        hw = self.w / 2.0
        hh = self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    def area(self) -> float:
        return self.w * self.h


def _require_same_frame(a: Box, b: Box, what: str) -> None:
    if a.frame != b.frame:
        raise FrameMismatchError(f"{what}: frames differ ({a.frame} vs {b.frame})")


def iou(a: Box, b: Box) -> float:
    """Intersection-over-union area ratio of two boxes in the same frame.

    Touching boxes (zero-area intersection) score 0.
    """
    _require_same_frame(a, b, "iou")
    ax1, ay1, ax2, ay2 = a.to_corners()
    bx1, by1, bx2, by2 = b.to_corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area() + b.area() - inter
    return inter / union


@dataclass(frozen=True, slots=True)
class LetterboxMap:
    """Affine map of an aspect-preserving resize onto a padded square canvas.

    scale is the single resize factor min(dst/src_w, dst/src_h); the padding
    splits the leftover canvas evenly on both sides of the short axis.
    """

    scale: float
    pad_x: float
    pad_y: float
    src_w: int
    src_h: int
    dst_size: int

    def __post_init__(self):
        if self.src_w <= 0 or self.src_h <= 0 or self.dst_size <= 0:
            raise ConfigError("letterbox dims must be positive")
        want = min(self.dst_size / self.src_w, self.dst_size / self.src_h)
        if abs(self.scale - want) > 1e-9:
            raise ConfigError(f"scale {self.scale} inconsistent; expected {want}")
        if abs(self.pad_x - (self.dst_size - self.scale * self.src_w) / 2.0) > 1e-9:
            raise ConfigError("pad_x is not symmetric for these dims")
        if abs(self.pad_y - (self.dst_size - self.scale * self.src_h) / 2.0) > 1e-9:
            raise ConfigError("pad_y is not symmetric for these dims")

    @classmethod
    def fit(cls, src_w: int, src_h: int, dst_size: int) -> "LetterboxMap":
        scale = min(dst_size / src_w, dst_size / src_h)
        pad_x = (dst_size - scale * src_w) / 2.0
        pad_y = (dst_size - scale * src_h) / 2.0
        return cls(scale, pad_x, pad_y, src_w, src_h, dst_size)


def letterbox_forward(m: LetterboxMap, b: Box) -> Box:
    """Map a box from source-image pixels onto the network canvas."""
    if b.frame != PIXEL_ORIGINAL:
        raise FrameMismatchError(f"letterbox_forward expects {PIXEL_ORIGINAL}, got {b.frame}")
    return Box(
        b.cx * m.scale + m.pad_x,
        b.cy * m.scale + m.pad_y,
        b.w * m.scale,
        b.h * m.scale,
        PIXEL_NETWORK,
    )


def letterbox_backward(m: LetterboxMap, b: Box) -> Box:
    """Inverse of letterbox_forward; recovers source-image pixels."""
    if b.frame != PIXEL_NETWORK:
        raise FrameMismatchError(f"letterbox_backward expects {PIXEL_NETWORK}, got {b.frame}")
    return Box(
        (b.cx - m.pad_x) / m.scale,
        (b.cy - m.pad_y) / m.scale,
        b.w / m.scale,
        b.h / m.scale,
        PIXEL_ORIGINAL,
    )


_AUGMENT_KINDS = ("fliph", "flipv", "rot90", "rot180", "rot270", "noise")


@dataclass(frozen=True, slots=True)
class AugmentOp:
    """One dataset augmentation: a mirror, a right-angle rotation, or pixel noise.

    Noise is photometric only; it carries a seed and sigma for the image side
    and never moves boxes.  Rotations are restricted to multiples of 90 degrees
    because rotating an axis-aligned box by anything else is lossy.
    """

    kind: str
    seed: int | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in _AUGMENT_KINDS:
            raise ConfigError(f"unknown augment kind {self.kind!r}")
        if self.kind == "noise" and (self.seed is None or self.sigma is None):
            raise ConfigError("noise op needs seed and sigma")
        if self.kind != "noise" and (self.seed is not None or self.sigma is not None):
            raise ConfigError(f"{self.kind} takes no seed/sigma")


FLIP_H = AugmentOp("fliph")
FLIP_V = AugmentOp("flipv")
ROT90 = AugmentOp("rot90")
ROT180 = AugmentOp("rot180")
ROT270 = AugmentOp("rot270")


def noise(seed: int, sigma: float) -> AugmentOp:
    return AugmentOp("noise", seed, sigma)


def transformed_dims(op: AugmentOp, image_dims: tuple[int, int]) -> tuple[int, int]:
    """Image (w, h) after the op; quarter-turn rotations swap the axes."""
    w, h = image_dims
    if op.kind in ("rot90", "rot270"):
        return (h, w)
    return (w, h)


def apply_augment(op: AugmentOp, image_dims: tuple[int, int], boxes: list[Box]) -> list[Box]:
    """Transform boxes consistently with the named image transform.

    Boxes must be in the original-pixel frame and inside the image. Quarter
    turns are counter-clockwise; their point map composes to the identity
    after four applications.
    """
    w, h = image_dims
    for i, b in enumerate(boxes):
        if b.frame != PIXEL_ORIGINAL:
            raise FrameMismatchError(f"augment expects {PIXEL_ORIGINAL}, got {b.frame}")
        x1, y1, x2, y2 = b.to_corners()
        if x1 < 0 or y1 < 0 or x2 > w or y2 > h:
            raise OutOfBoundsError(
                f"box {i} ({x1:.1f},{y1:.1f},{x2:.1f},{y2:.1f}) outside {w}x{h} image"
            )

    if op.kind == "noise":
        return list(boxes)

    out = []
    for b in boxes:
        if op.kind == "fliph":
            out.append(Box(w - b.cx, b.cy, b.w, b.h, b.frame))
        elif op.kind == "flipv":
            out.append(Box(b.cx, h - b.cy, b.w, b.h, b.frame))
        elif op.kind == "rot180":
            out.append(Box(w - b.cx, h - b.cy, b.w, b.h, b.frame))
        elif op.kind == "rot90":
            out.append(Box(b.cy, w - b.cx, b.h, b.w, b.frame))
        elif op.kind == "rot270":
            out.append(Box(h - b.cy, b.cx, b.h, b.w, b.frame))
    return out
