"""Shared data model: frame pairs, label spaces, labelings and gradient maps.

Pixel arrays are indexed ``[y, x]``; pixel coordinates passed around as
tuples are ``(x, y)``. View 0 is the left camera. A pixel at column ``x``
in view 0 with disparity ``d`` corresponds to column ``x - d`` in view 1,
and a pixel of view 1 corresponds to ``x + d`` in view 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MutualSegError(Exception):
    """Base class for all errors raised by this package."""


class IntegrityError(MutualSegError):
    """Latent bookkeeping (e.g. correspondence counts) disagrees with labels."""


def shift_sign(view: int) -> int:
    """Column offset sign applied to a disparity when leaving ``view``."""
    if view not in (0, 1):
        raise ValueError(f"view must be 0 or 1, got {view}")
    return -1 if view == 0 else 1


def rectified_shift(p: tuple[int, int], d: int, view: int, width: int) -> tuple[int, int] | None:
    """Return the epipolar match of ``p`` in the other view, or None if out of bounds."""
    x, y = p
    xs = x + shift_sign(view) * d
    if xs < 0 or xs >= width:
        return None
    return (xs, y)


def shifted_columns(labels: np.ndarray, view: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``rectified_shift`` over a label map.

    Returns the target column of every pixel and a boolean in-bounds mask.
    """
    h, w = labels.shape
    xs = np.arange(w)[None, :] + shift_sign(view) * labels.astype(np.int64)
    valid = (xs >= 0) & (xs < w)
    return xs, valid


def sample_shifted(values: np.ndarray, labels: np.ndarray, view: int, fill: float = 0.0) -> np.ndarray:
    """Read ``values`` (an other-view map) at every pixel's epipolar target.

    Out-of-bounds targets read as ``fill``.
    """
    h, w = labels.shape
    xs, valid = shifted_columns(labels, view)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    out = np.full((h, w) + values.shape[2:], fill, dtype=np.result_type(values.dtype, np.float64))
    out[valid] = values[rows[valid], xs[valid]]
    return out


@dataclass(frozen=True)
class FramePair:
    """One rectified, synchronized two-modality image pair."""

    images: tuple[np.ndarray, np.ndarray]
    frame_index: int = 0
    rectified: bool = True
    modalities: tuple[str, str] = ("visible", "lwir")

    def __post_init__(self):
        if not self.rectified:
            raise ValueError("only rectified pairs are supported")
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        if len(self.images) != 2:
            raise ValueError("a frame pair holds exactly two images")
        imgs = tuple(_as_image(im) for im in self.images)
        if imgs[0].shape[:2] != imgs[1].shape[:2]:
            raise ValueError(
                f"view sizes differ: {imgs[0].shape[1]}x{imgs[0].shape[0]} "
                f"vs {imgs[1].shape[1]}x{imgs[1].shape[0]}"
            )
        object.__setattr__(self, "images", imgs)

    @property
    def height(self) -> int:
        return self.images[0].shape[0]

    @property
    def width(self) -> int:
        return self.images[0].shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.images[0].shape[:2]


def _as_image(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ValueError(f"images must be HxW or HxWx3, got shape {arr.shape}")
    if arr.size and (np.nanmin(arr) < 0 or np.nanmax(arr) > 255 or not np.all(np.isfinite(arr))):
        raise ValueError("pixel values must lie in [0, 255]")
    return arr


def as_channels(image: np.ndarray) -> np.ndarray:
    """View an image as float64 ``HxWxC``."""
    arr = np.asarray(image, dtype=np.float64)
    return arr[:, :, None] if arr.ndim == 2 else arr


@dataclass(frozen=True)
class LabelSpaces:
    d_max: int

    def __post_init__(self):
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")

    @property
    def disparities(self) -> range:
        return range(self.d_max + 1)

    @property
    def n_disparities(self) -> int:
        return self.d_max + 1

    segmentation = (0, 1)

    def check_width(self, width: int) -> None:
        if self.d_max >= width:
            raise ValueError(f"d_max={self.d_max} must be smaller than the image width {width}")


def count_correspondences(labels: np.ndarray, view: int) -> np.ndarray:
    """Number of pixels of ``view`` whose epipolar target lands on each other-view pixel."""
    h, w = labels.shape
    xs, valid = shifted_columns(labels, view)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    flat = rows[valid] * w + xs[valid]
    return np.bincount(flat, minlength=h * w).reshape(h, w).astype(np.int64)


@dataclass
class DisparityLabeling:
    """Disparity labels of one view plus correspondence counts over the other view."""

    labels: np.ndarray
    view: int
    d_max: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 2:
            raise ValueError("disparity labels must be 2-D")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > self.d_max):
            raise ValueError(f"disparity labels must lie in [0, {self.d_max}]")
        if self.counts is None:
            self.recount()
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)

    @classmethod
    def uniform(cls, shape, d: int, view: int, d_max: int) -> "DisparityLabeling":
        return cls(np.full(shape, d, dtype=np.int64), view, d_max)

    def recount(self) -> None:
        self.counts = count_correspondences(self.labels, self.view)

    def check_counts(self) -> None:
        fresh = count_correspondences(self.labels, self.view)
        if not np.array_equal(fresh, self.counts):
            bad = int(np.count_nonzero(fresh != self.counts))
            raise IntegrityError(f"correspondence counts of view {self.view} are stale at {bad} pixels")

    def set_labels(self, labels: np.ndarray) -> None:
        self.labels = np.asarray(labels, dtype=np.int64)
        self.recount()

    def copy(self) -> "DisparityLabeling":
        return DisparityLabeling(self.labels.copy(), self.view, self.d_max, self.counts.copy())


def as_mask(mask) -> np.ndarray:
    """Validate a segmentation labeling and return it as a uint8 0/1 array."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError("segmentation labelings must be 2-D")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("segmentation labels must be exactly 0 or 1")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class GradientMap:
    """Per-edge gradient magnitudes on the 4-neighbour grid.

    ``horizontal[y, x]`` belongs to edge ``(x, y)-(x+1, y)`` and has shape
    ``H x (W-1)``; ``vertical[y, x]`` belongs to ``(x, y)-(x, y+1)``.
    Edges are undirected, so the map is symmetric by construction.
    """

    horizontal: np.ndarray
    vertical: np.ndarray

    def edge(self, p: tuple[int, int], q: tuple[int, int]) -> float:
        (x0, y0), (x1, y1) = sorted([p, q], key=lambda c: (c[1], c[0]))
        if y0 == y1 and x1 == x0 + 1:
            return float(self.horizontal[y0, x0])
        if x0 == x1 and y1 == y0 + 1:
            return float(self.vertical[y0, x0])
        raise ValueError(f"{p} and {q} are not 4-neighbours")


def compute_gradient_map(image) -> GradientMap:
    img = as_channels(image)
    horiz = np.abs(np.diff(img, axis=1)).max(axis=2)
    vert = np.abs(np.diff(img, axis=0)).max(axis=2)
    return GradientMap(horiz, vert)


def gradient_scale(grad, g: float):
    """Edge weight that fades out once a gradient exceeds the expected contour gradient ``g``."""
    return np.maximum(np.exp(1.0 - np.asarray(grad, dtype=np.float64) / g) - 0.5, 0.0)


def channel_max_diff(a, b) -> np.ndarray:
    """Channel-wise maximum absolute difference; channels on the last axis."""
    diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return diff if diff.ndim == 0 else diff.max(axis=-1)
