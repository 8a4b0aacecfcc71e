"""Decoding of raw YOLOv3-style detection-head tensors into candidate boxes.

Each head cell predicts, per anchor slot, the attribute vector
(t_x, t_y, t_w, t_h, t_obj, class logits...).  Decoding applies

    center_x = (sigmoid(t_x) + cell_x) * stride
    center_y = (sigmoid(t_y) + cell_y) * stride
    width    = anchor_w * exp(t_w)
    height   = anchor_h * exp(t_h)

with sigmoids on objectness and each class logit.  Because sigmoid maps any
finite logit into the open interval (0, 1), a decoded center can never leave
its grid cell.  ``encode_cell`` is the exact inverse, used for round-trip
testing and for planting known objects in synthetic backbones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DecodeError, EncodeError, ShapeError
from .geometry import PIXEL_NETWORK, Box

# Sigmoid outputs are pinned inside the open unit interval and decoded sizes
# floored at a tiny positive value so saturation/underflow at extreme logits
# cannot produce a center on a cell boundary or a zero-sized box.  The upper
# clamp leaves enough headroom that (cell + offset) still rounds strictly
# below cell + 1 after the float add, for any realistic grid size.
_OPEN_LO = math.ulp(0.0)
_OPEN_HI = 1.0 - 2.0**-32
_TINY = math.ulp(0.0)

# Conventional 416-input anchors, flat in scale-group order for strides
# (32, 16, 8): the largest-area triple pairs with the coarsest grid.
DEFAULT_ANCHORS: tuple[tuple[float, float], ...] = (
    (116.0, 90.0),
    (156.0, 198.0),
    (373.0, 326.0),
    (30.0, 61.0),
    (62.0, 45.0),
    (59.0, 119.0),
    (10.0, 13.0),
    (16.0, 30.0),
    (33.0, 23.0),
)


def sigmoid(x: float) -> float:
    """Numerically stable logistic function."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def logit(p: float) -> float:
    """Inverse sigmoid; defined only on the open interval (0, 1)."""
    if not 0.0 < p < 1.0:
        raise EncodeError(f"logit undefined at {p}")
    return math.log(p / (1.0 - p))


def _open_unit(x: float) -> float:
    return min(max(x, _OPEN_LO), _OPEN_HI)


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True, slots=True)
class AnchorBox:
    """A prior box; width/height in network-input pixels."""

    pw: float
    ph: float

    def __post_init__(self):
        if not (self.pw > 0 and self.ph > 0):
            raise ValueError(f"anchor dims must be positive, got ({self.pw}, {self.ph})")

    def area(self) -> float:
        return self.pw * self.ph


@dataclass(frozen=True)
class HeadSpec:
    """Layout contract of the detection head.

    The channel depth of every scale is boxes_per_cell * (5 + num_classes):
    18 for the single-class head, 27 for the four-subtype head.  Passing an
    explicit ``depth`` asserts that value at construction; anything that does
    not match the formula is rejected.
    """

    num_classes: int
    boxes_per_cell: int = 3
    strides: tuple[int, ...] = (32, 16, 8)
    input_size: int = 416
    anchors: tuple[AnchorBox, ...] = ()
    depth: int | None = None

    def __post_init__(self):
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.boxes_per_cell < 1:
            raise ConfigError(f"boxes_per_cell must be >= 1, got {self.boxes_per_cell}")
        if not self.strides:
            raise ConfigError("at least one stride required")
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        for s in self.strides:
            if s <= 0 or self.input_size % s != 0:
                raise ConfigError(
                    f"input_size {self.input_size} not divisible by stride {s}"
                )
        anchors = tuple(
            a if isinstance(a, AnchorBox) else AnchorBox(float(a[0]), float(a[1]))
            for a in (self.anchors or DEFAULT_ANCHORS)
        )
        need = self.boxes_per_cell * len(self.strides)
        if len(anchors) != need:
            raise ConfigError(f"need {need} anchors, got {len(anchors)}")
        object.__setattr__(self, "anchors", anchors)
        want = self.boxes_per_cell * (5 + self.num_classes)
        if self.depth is not None and self.depth != want:
            raise ShapeError(
                f"declared depth {self.depth} != "
                f"{self.boxes_per_cell}*(5+{self.num_classes}) = {want}"
            )
        object.__setattr__(self, "depth", want)

    @property
    def attrs_per_box(self) -> int:
        return 5 + self.num_classes

    def grid_size(self, scale_index: int) -> int:
        return self.input_size // self.strides[scale_index]

    def anchors_for_scale(self, scale_index: int) -> tuple[AnchorBox, ...]:
        b = self.boxes_per_cell
        return self.anchors[scale_index * b : (scale_index + 1) * b]


@dataclass(frozen=True)
class GridTensor:
    """One detection-scale output volume.

    ``values`` has shape (grid_h, grid_w, boxes_per_cell, 5 + num_classes) in
    row-major order, i.e. the flattened layout is [cell_y][cell_x][anchor][attr]
    with attributes ordered (t_x, t_y, t_w, t_h, t_obj, class logits...).
    The array is frozen after construction.
    """

    scale_index: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 4:
            raise ShapeError(f"grid values must be 4-d, got shape {v.shape}")
        if v.shape[3] < 6:
            raise ShapeError(f"need at least 6 attributes per slot, got {v.shape[3]}")
        if not v.flags.c_contiguous or v.flags.writeable:
            v = np.ascontiguousarray(v).copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_flat(
        cls, scale_index: int, flat: np.ndarray, grid_h: int, grid_w: int, boxes_per_cell: int
    ) -> "GridTensor":
        flat = np.asarray(flat)
        if flat.size % (grid_h * grid_w * boxes_per_cell) != 0:
            raise ShapeError(
                f"{flat.size} values do not tile a {grid_h}x{grid_w}x{boxes_per_cell} grid"
            )
        attrs = flat.size // (grid_h * grid_w * boxes_per_cell)
        return cls(scale_index, flat.reshape(grid_h, grid_w, boxes_per_cell, attrs))

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]

    @property
    def boxes_per_cell(self) -> int:
        return self.values.shape[2]

    @property
    def attrs_per_box(self) -> int:
        return self.values.shape[3]

    @property
    def depth(self) -> int:
        return self.values.shape[2] * self.values.shape[3]


@dataclass(frozen=True)
class RawDetection:
    """A decoded head slot: box in network pixels plus raw scores.

    ``cell`` is (cell_x, cell_y) of the grid cell the slot belongs to.
    """

    box: Box
    objectness: float
    class_probs: tuple[float, ...]
    scale_index: int
    cell: tuple[int, int]
    anchor_index: int


def decode_cell(
    t,
    cell: tuple[int, int],
    anchor: AnchorBox,
    stride: int,
    scale_index: int = 0,
    anchor_index: int = 0,
) -> RawDetection:
    """Decode one attribute vector (length 5 + num_classes) at a grid cell."""
    vals = [float(v) for v in t]
    if len(vals) < 6:
        raise ShapeError(f"attribute vector too short: {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise DecodeError(f"non-finite head activation in cell {cell}")
    cell_x, cell_y = cell
    bx = (cell_x + _open_unit(sigmoid(vals[0]))) * stride
    by = (cell_y + _open_unit(sigmoid(vals[1]))) * stride
    bw = max(anchor.pw * _safe_exp(vals[2]), _TINY)
    bh = max(anchor.ph * _safe_exp(vals[3]), _TINY)
    obj = _open_unit(sigmoid(vals[4]))
    probs = tuple(_open_unit(sigmoid(v)) for v in vals[5:])
    return RawDetection(
        Box(bx, by, bw, bh, PIXEL_NETWORK), obj, probs, scale_index, (cell_x, cell_y), anchor_index
    )


def encode_cell(d: RawDetection, anchor: AnchorBox, stride: int) -> np.ndarray:
    """Inverse of decode_cell; the box center must lie strictly inside its cell.

    Raises EncodeError for objectness/class probabilities of exactly 0 or 1.
    """
    cell_x, cell_y = d.cell
    fx = d.box.cx / stride - cell_x
    fy = d.box.cy / stride - cell_y
    if not (0.0 < fx < 1.0 and 0.0 < fy < 1.0):
        raise EncodeError(
            f"box center ({d.box.cx}, {d.box.cy}) not strictly inside cell {d.cell} "
            f"at stride {stride}"
        )
    if d.box.w <= 0 or d.box.h <= 0:
        raise EncodeError("box size must be positive")
    out = [
        logit(fx),
        logit(fy),
        math.log(d.box.w / anchor.pw),
        math.log(d.box.h / anchor.ph),
        logit(d.objectness),
    ]
    out.extend(logit(p) for p in d.class_probs)
    return np.array(out, dtype=np.float64)


def _sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def decode_grid(g: GridTensor, spec: HeadSpec) -> list[RawDetection]:
    """Decode every slot of one scale; returns grid_h * grid_w * b detections
    in row-major (cell_y, cell_x, anchor) order."""
    if not 0 <= g.scale_index < len(spec.strides):
        raise ShapeError(f"scale index {g.scale_index} outside {len(spec.strides)} scales")
    want_g = spec.grid_size(g.scale_index)
    if g.depth != spec.depth:
        raise ShapeError(f"expected depth {spec.depth}, got {g.depth}")
    if (
        g.grid_h != want_g
        or g.grid_w != want_g
        or g.boxes_per_cell != spec.boxes_per_cell
        or g.attrs_per_box != spec.attrs_per_box
    ):
        raise ShapeError(
            f"grid shape {g.values.shape} inconsistent with spec "
            f"({want_g}x{want_g}x{spec.boxes_per_cell}x{spec.attrs_per_box})"
        )

    v = np.asarray(g.values, dtype=np.float64)
    if not np.isfinite(v).all():
        raise DecodeError(f"non-finite head activations at scale {g.scale_index}")
    stride = spec.strides[g.scale_index]
    anchors = spec.anchors_for_scale(g.scale_index)
    gh, gw, b, _ = v.shape

    sig_xy = np.clip(_sigmoid_array(v[..., 0:2]), _OPEN_LO, _OPEN_HI)
    bx = (np.arange(gw, dtype=np.float64)[None, :, None] + sig_xy[..., 0]) * stride
    by = (np.arange(gh, dtype=np.float64)[:, None, None] + sig_xy[..., 1]) * stride
    pw = np.array([a.pw for a in anchors])[None, None, :]
    ph = np.array([a.ph for a in anchors])[None, None, :]
    with np.errstate(over="ignore", under="ignore"):
        bw = np.maximum(pw * np.exp(v[..., 2]), _TINY)
        bh = np.maximum(ph * np.exp(v[..., 3]), _TINY)
    obj = np.clip(_sigmoid_array(v[..., 4]), _OPEN_LO, _OPEN_HI)
    probs = np.clip(_sigmoid_array(v[..., 5:]), _OPEN_LO, _OPEN_HI)

    bx_l, by_l = bx.tolist(), by.tolist()
    bw_l, bh_l = bw.tolist(), bh.tolist()
    obj_l, probs_l = obj.tolist(), probs.tolist()
    out: list[RawDetection] = []
    si = g.scale_index
    for y in range(gh):
        for x in range(gw):
            for a in range(b):
                out.append(
                    RawDetection(
                        Box(bx_l[y][x][a], by_l[y][x][a], bw_l[y][x][a], bh_l[y][x][a], PIXEL_NETWORK),
                        obj_l[y][x][a],
                        tuple(probs_l[y][x][a]),
                        si,
                        (x, y),
                        a,
                    )
                )
    return out
