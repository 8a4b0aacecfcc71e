"""Anchor computation: k-means over ground-truth box sizes, three anchors per scale.

The default distance between a (w, h) pair and a centroid is 1 - IoU of the
two rectangles laid co-centered at the origin, which is scale-aware and the
usual choice for anchor clustering; plain Euclidean distance on (w, h) is
available for comparison.  Centroids are updated with the component-wise
median under the IoU metric (mean under Euclidean); an update that would
lower the mean IoU of its cluster is skipped, which makes the recorded
mean-IoU trace non-decreasing by construction under the IoU metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, InsufficientDataError
from .head import AnchorBox

DIST_IOU = "iou"
DIST_EUCLID = "euclid"


@dataclass(frozen=True)
class AnchorConfig:
    k: int = 9
    max_iters: int = 300
    tol: float = 1e-6
    seed: int = 0
    distance: str = DIST_IOU
    strides: tuple[int, ...] = (32, 16, 8)

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.distance not in (DIST_IOU, DIST_EUCLID):
            raise ConfigError(f"unknown distance {self.distance!r}")
        if self.k % len(self.strides) != 0:
            raise ConfigError(
                f"k={self.k} not divisible by {len(self.strides)} scales"
            )


@dataclass(frozen=True)
class AnchorResult:
    """Clustering output: anchors ascending by area plus the per-scale split."""

    anchors: tuple[AnchorBox, ...]
    per_scale: dict[int, tuple[AnchorBox, ...]]
    mean_iou: float
    iterations_run: int
    mean_iou_trace: tuple[float, ...]


def _pairwise_iou(dims: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Co-centered IoU matrix between (N,2) dims and (K,2) centers."""
    inter = np.minimum(dims[:, None, :], centers[None, :, :]).prod(axis=2)
    union = dims.prod(axis=1)[:, None] + centers.prod(axis=1)[None, :] - inter
    return inter / union


def _distances(dims: np.ndarray, centers: np.ndarray, distance: str) -> np.ndarray:
    if distance == DIST_IOU:
        return 1.0 - _pairwise_iou(dims, centers)
    diff = dims[:, None, :] - centers[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _seed_centers(dims: np.ndarray, k: int, distance: str, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding driven by the configured distance."""
    n = dims.shape[0]
    centers = np.empty((k, 2))
    centers[0] = dims[rng.integers(n)]
    d2 = _distances(dims, centers[:1], distance)[:, 0] ** 2
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[i] = dims[idx]
        d2 = np.minimum(d2, _distances(dims, centers[i : i + 1], distance)[:, 0] ** 2)
    return centers


def cluster_anchors(dims, cfg: AnchorConfig = AnchorConfig()) -> AnchorResult:
    """Cluster (w, h) pairs (network-pixel units) into cfg.k anchor boxes.

    Deterministic for a fixed (dims, seed).  Stops when assignments are
    stable, the mean-IoU change drops below cfg.tol, or max_iters is hit.
    Empty clusters are reseeded from the point farthest from every centroid.
    """
    dims = np.asarray(dims, dtype=np.float64)
    if dims.ndim != 2 or dims.shape[1] != 2:
        raise InputError(f"dims must be (N, 2), got shape {dims.shape}")
    if not np.isfinite(dims).all() or (dims <= 0).any():
        raise InputError("all box dims must be positive and finite")
    n = dims.shape[0]
    if n < cfg.k:
        raise InsufficientDataError(f"{n} boxes cannot seed {cfg.k} clusters")

    rng = np.random.default_rng(cfg.seed)
    centers = _seed_centers(dims, cfg.k, cfg.distance, rng)

    trace: list[float] = []
    assignments = np.full(n, -1, dtype=np.int64)
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        dist = _distances(dims, centers, cfg.distance)
        new_assignments = dist.argmin(axis=1)

        # Reseed empty clusters from the farthest point before accepting.
        nearest = dist[np.arange(n), new_assignments]
        for c in range(cfg.k):
            if not (new_assignments == c).any():
                far = int(nearest.argmax())
                centers[c] = dims[far]
                dist = _distances(dims, centers, cfg.distance)
                new_assignments = dist.argmin(axis=1)
                nearest = dist[np.arange(n), new_assignments]

        mean_iou = _pairwise_iou(dims, centers)[np.arange(n), new_assignments].mean()
        converged = (new_assignments == assignments).all()
        small_change = len(trace) > 0 and abs(mean_iou - trace[-1]) < cfg.tol
        trace.append(float(mean_iou))
        assignments = new_assignments
        if converged or small_change:
            break

        for c in range(cfg.k):
            members = dims[assignments == c]
            if members.shape[0] == 0:
                continue
            if cfg.distance == DIST_IOU:
                candidate = np.median(members, axis=0)
                # Guarded update: keep the old centroid if the median would
                # lower this cluster's mean IoU.
                old = _pairwise_iou(members, centers[c : c + 1]).mean()
                new = _pairwise_iou(members, candidate[None, :]).mean()
                if new >= old:
                    centers[c] = candidate
            else:
                centers[c] = members.mean(axis=0)

    order = np.lexsort((centers[:, 1], centers[:, 0], centers.prod(axis=1)))
    anchors = tuple(AnchorBox(float(w), float(h)) for w, h in centers[order])
    return AnchorResult(
        anchors=anchors,
        per_scale=assign_to_scales(anchors, cfg.strides),
        mean_iou=trace[-1],
        iterations_run=iterations,
        mean_iou_trace=tuple(trace),
    )


def assign_to_scales(
    anchors, strides: tuple[int, ...] = (32, 16, 8)
) -> dict[int, tuple[AnchorBox, ...]]:
    """Split anchors into equal area-sorted groups, largest areas on the
    largest stride (the coarsest grid sees the biggest objects)."""
    anchors = tuple(
        a if isinstance(a, AnchorBox) else AnchorBox(float(a[0]), float(a[1])) for a in anchors
    )
    if len(anchors) % len(strides) != 0:
        raise ConfigError(f"{len(anchors)} anchors not divisible by {len(strides)} scales")
    per = len(anchors) // len(strides)
    by_area = sorted(anchors, key=lambda a: (a.area(), a.pw, a.ph))
    # Rank strides ascending; the scale with the largest stride takes the
    # last (largest-area) group.
    stride_rank = sorted(range(len(strides)), key=lambda i: strides[i])
    out: dict[int, tuple[AnchorBox, ...]] = {}
    for rank, scale_index in enumerate(stride_rank):
        out[scale_index] = tuple(by_area[rank * per : (rank + 1) * per])
    return out


def flatten_scale_groups(per_scale: dict[int, tuple[AnchorBox, ...]]) -> tuple[AnchorBox, ...]:
    """Flat anchor tuple in scale order, as HeadSpec expects."""
    out: list[AnchorBox] = []
    for i in sorted(per_scale):
        out.extend(per_scale[i])
    return tuple(out)


def format_anchor_file(
    result: AnchorResult, input_size: int, seed: int, source: str = ""
) -> str:
    """Anchor text file: header comments, then one ``pw,ph`` line per anchor
    in ascending area order."""
    lines = [
        f"# anchors input_size={input_size} seed={seed}",
        f"# k={len(result.anchors)} mean_iou={result.mean_iou:.6f} "
        f"iterations={result.iterations_run}",
    ]
    if source:
        lines.append(f"# source={source}")
    lines.extend(f"{a.pw:.4f},{a.ph:.4f}" for a in result.anchors)
    return "\n".join(lines) + "\n"


def parse_anchor_file(text: str) -> tuple[AnchorBox, ...]:
    anchors = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise InputError(f"bad anchor line {raw!r}")
        anchors.append(AnchorBox(float(parts[0]), float(parts[1])))
    if not anchors:
        raise InputError("anchor file holds no anchors")
    return tuple(anchors)
