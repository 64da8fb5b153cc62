"""Dense descriptor fields, affinity cost volumes and saliency maps."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .core import as_channels, as_mask, shift_sign

APPEARANCE = "appearance"
SHAPE = "shape"


@dataclass(frozen=True)
class DescriptorField:
    """Per-pixel descriptor vectors, ``H x W x B`` float32."""

    values: np.ndarray
    kind: str

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class AffinityCostVolume:
    """``costs[y, x, d]``: matching cost of pixel ``(x, y)`` with its match at disparity ``d``.

    ``valid[x, d]`` flags in-bounds targets; out-of-bounds entries are 0.
    """

    costs: np.ndarray
    view: int

    @property
    def d_max(self) -> int:
        return self.costs.shape[2] - 1

    @property
    def valid(self) -> np.ndarray:
        return disparity_validity(self.costs.shape[1], self.d_max, self.view)


@dataclass(frozen=True)
class SaliencyMap:
    weights: np.ndarray
    cue: str


def disparity_validity(width: int, d_max: int, view: int) -> np.ndarray:
    """``W x (d_max+1)`` boolean table of in-bounds epipolar targets."""
    xs = np.arange(width)[:, None] + shift_sign(view) * np.arange(d_max + 1)[None, :]
    return (xs >= 0) & (xs < width)


# ---------------------------------------------------------------------------
# local self-similarity


@dataclass(frozen=True)
class SelfSimilarityConfig:
    patch_size: int = 5
    radius: int = 40
    angular_bins: int = 20
    radial_bins: int = 4
    noise_sigma: float = 2.0

    def __post_init__(self):
        # the offset layout is built per quadrant and rotated
        if self.angular_bins % 4:
            raise ValueError("angular_bins must be a multiple of 4")


def _radial_edges(radius: float, n: int) -> np.ndarray:
    # log-spaced, halving towards the centre: [0, r/2^(n-1), ..., r/2, r]
    return np.concatenate([[0.0], radius / 2.0 ** np.arange(n - 1, -1, -1)])


def self_similarity_offsets(cfg: SelfSimilarityConfig = SelfSimilarityConfig()) -> list[list[tuple[int, int]]]:
    """Integer ``(dx, dy)`` sample offsets for each descriptor bin.

    Bins are ordered radial-major within each angular sector:
    ``bin = angular_index * radial_bins + radial_index``. Offsets of sector
    ``a + angular_bins/4`` are the 90-degree rotations of those of sector
    ``a``, so rotating the image permutes bins exactly.
    """
    edges = _radial_edges(cfg.radius, cfg.radial_bins)
    quarter = cfg.angular_bins // 4
    width = 2 * np.pi / cfg.angular_bins
    first: list[list[tuple[int, int]]] = []
    for a in range(quarter):
        for r in range(cfg.radial_bins):
            lo, hi = max(edges[r], 1.0), edges[r + 1]
            pts = set()
            for rad in (lo + 0.3 * (hi - lo), lo + 0.8 * (hi - lo)):
                for frac in (0.25, 0.75):
                    ang = (a + frac) * width
                    dx = int(round(rad * np.cos(ang)))
                    dy = int(round(rad * np.sin(ang)))
                    if (dx, dy) != (0, 0):
                        pts.add((dx, dy))
            first.append(sorted(pts))
    bins = list(first)
    for turn in range(1, 4):
        for offs in first:
            rot = []
            for dx, dy in offs:
                for _ in range(turn):
                    dx, dy = -dy, dx
                rot.append((dx, dy))
            bins.append(sorted(rot))
    return bins


def _patch_ssd(padded: np.ndarray, pad: int, h: int, w: int, dx: int, dy: int, k: int) -> np.ndarray:
    center = padded[pad:pad + h, pad:pad + w]
    other = padded[pad + dy:pad + dy + h, pad + dx:pad + dx + w]
    sq = ((center - other) ** 2).sum(axis=2)
    return cv2.boxFilter(sq, -1, (k, k), normalize=False, borderType=cv2.BORDER_REPLICATE)


def compute_self_similarity_field(image, cfg: SelfSimilarityConfig = SelfSimilarityConfig()) -> DescriptorField:
    """Dense log-polar local self-similarity descriptors, each scaled to a peak of 1."""
    img = as_channels(image).astype(np.float32)
    h, w, c = img.shape
    pad = cfg.radius + 1
    padded = cv2.copyMakeBorder(img, pad, pad, pad, pad, cv2.BORDER_REPLICATE)
    if padded.ndim == 2:
        padded = padded[:, :, None]
    k = cfg.patch_size

    var_auto = np.zeros((h, w), np.float32)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx or dy:
                np.maximum(var_auto, _patch_ssd(padded, pad, h, w, dx, dy, k), out=var_auto)
    var_noise = np.float32(k * k * c * cfg.noise_sigma ** 2)
    scale = np.maximum(var_auto, var_noise)

    bins = self_similarity_offsets(cfg)
    cache: dict[tuple[int, int], np.ndarray] = {}
    out = np.zeros((h, w, len(bins)), np.float32)
    for b, offs in enumerate(bins):
        acc = out[:, :, b]
        for off in offs:
            sim = cache.get(off)
            if sim is None:
                sim = np.exp(-_patch_ssd(padded, pad, h, w, off[0], off[1], k) / scale)
                cache[off] = sim
            np.maximum(acc, sim, out=acc)
    out /= np.maximum(out.max(axis=2, keepdims=True), np.float32(1e-12))
    return DescriptorField(out, APPEARANCE)


# ---------------------------------------------------------------------------
# shape context


@dataclass(frozen=True)
class ShapeContextConfig:
    diameter: int = 50
    angular_bins: int = 10
    radial_bins: int = 3


def contour_points(mask) -> np.ndarray:
    """Foreground pixels with at least one 4-neighbour in the background."""
    m = as_mask(mask).astype(bool)
    padded = np.pad(m, 1, mode="edge")
    inner = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~inner


def shape_context_bin(dx: float, dy: float, cfg: ShapeContextConfig = ShapeContextConfig()) -> int | None:
    """Histogram bin of a contour point at relative offset ``(dx, dy)``; None if outside the disc."""
    r = float(np.hypot(dx, dy))
    radius = cfg.diameter / 2
    if r == 0 or r > radius:
        return None
    edges = _radial_edges(radius, cfg.radial_bins)
    rbin = int(np.searchsorted(edges[1:], r, side="left"))
    ang = np.arctan2(dy, dx) % (2 * np.pi)
    abin = min(int(ang / (2 * np.pi / cfg.angular_bins)), cfg.angular_bins - 1)
    return abin * cfg.radial_bins + rbin


def shape_context_kernels(cfg: ShapeContextConfig = ShapeContextConfig()) -> np.ndarray:
    rad = cfg.diameter // 2
    n = cfg.angular_bins * cfg.radial_bins
    kernels = np.zeros((n, 2 * rad + 1, 2 * rad + 1), np.float32)
    for dy in range(-rad, rad + 1):
        for dx in range(-rad, rad + 1):
            b = shape_context_bin(dx, dy, cfg)
            if b is not None:
                kernels[b, dy + rad, dx + rad] = 1.0
    return kernels


_KERNEL_CACHE: dict[ShapeContextConfig, np.ndarray] = {}


def compute_shape_context_field(mask, cfg: ShapeContextConfig = ShapeContextConfig()) -> DescriptorField:
    """Dense log-polar histograms of contour points, L1-normalized where nonempty."""
    pts = contour_points(mask).astype(np.float32)
    h, w = pts.shape
    kernels = _KERNEL_CACHE.get(cfg)
    if kernels is None:
        kernels = _KERNEL_CACHE.setdefault(cfg, shape_context_kernels(cfg))
    out = np.zeros((h, w, kernels.shape[0]), np.float32)
    if not pts.any():
        return DescriptorField(out, SHAPE)
    ys, xs = np.nonzero(pts)
    rad = kernels.shape[1] // 2
    # only rows/columns within reach of a contour point can be nonzero
    y0, y1 = max(ys.min() - rad, 0), min(ys.max() + rad + 1, h)
    x0, x1 = max(xs.min() - rad, 0), min(xs.max() + rad + 1, w)
    sy0, sy1 = max(y0 - rad, 0), min(y1 + rad, h)
    sx0, sx1 = max(x0 - rad, 0), min(x1 + rad, w)
    sub = pts[sy0:sy1, sx0:sx1]
    for b, kern in enumerate(kernels):
        resp = cv2.filter2D(sub, -1, kern, borderType=cv2.BORDER_CONSTANT)
        out[y0:y1, x0:x1, b] = resp[y0 - sy0:y1 - sy0, x0 - sx0:x1 - sx0]
    np.maximum(out, 0, out=out)
    # filter2D goes through the DFT for large kernels; snap the round-off back to counts
    np.rint(out, out=out)
    total = out.sum(axis=2, keepdims=True)
    np.divide(out, total, out=out, where=total > 0)
    return DescriptorField(out, SHAPE)


# ---------------------------------------------------------------------------
# affinity volumes


def raw_distance_slice(fa: np.ndarray, fb: np.ndarray, d: int, view: int) -> np.ndarray:
    """Per-pixel L2 descriptor distance at disparity ``d`` (0 for out-of-bounds targets)."""
    h, w, _ = fa.shape
    out = np.zeros((h, w), fa.dtype)
    if d >= w:
        return out
    if view == 0:
        diff = fa[:, d:, :] - fb[:, :w - d, :]
        out[:, d:] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    else:
        diff = fa[:, :w - d, :] - fb[:, d:, :]
        out[:, :w - d] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def aggregate_window(raw: np.ndarray, window: int = 15) -> np.ndarray:
    """Mean over a ``window x window`` box centred on each pixel; outside pixels count as 0."""
    summed = cv2.boxFilter(raw, -1, (window, window), normalize=False, borderType=cv2.BORDER_CONSTANT)
    return summed / raw.dtype.type(window * window)


def build_affinity_volume(field_a: DescriptorField, field_b: DescriptorField, d_max: int, view: int,
                          window: int = 15, dtype=np.float32) -> AffinityCostVolume:
    """Affinity costs of ``view`` (described by ``field_a``) against the other view (``field_b``)."""
    fa = np.ascontiguousarray(field_a.values, dtype=dtype)
    fb = np.ascontiguousarray(field_b.values, dtype=dtype)
    if fa.shape != fb.shape:
        raise ValueError(f"descriptor fields differ in shape: {fa.shape} vs {fb.shape}")
    h, w, _ = fa.shape
    vol = np.zeros((h, w, d_max + 1), dtype)
    valid = disparity_validity(w, d_max, view)
    for d in range(d_max + 1):
        vol[:, :, d] = aggregate_window(raw_distance_slice(fa, fb, d, view), window)
    vol *= valid[None, :, :]
    return AffinityCostVolume(vol, view)


def build_affinity_pair(field0: DescriptorField, field1: DescriptorField, d_max: int,
                        window: int = 15) -> tuple[AffinityCostVolume, AffinityCostVolume]:
    """Both views' volumes, sharing one raw distance computation per disparity."""
    f0 = np.ascontiguousarray(field0.values, dtype=np.float32)
    f1 = np.ascontiguousarray(field1.values, dtype=np.float32)
    if f0.shape != f1.shape:
        raise ValueError(f"descriptor fields differ in shape: {f0.shape} vs {f1.shape}")
    h, w, _ = f0.shape
    vol0 = np.zeros((h, w, d_max + 1), np.float32)
    vol1 = np.zeros((h, w, d_max + 1), np.float32)
    for d in range(min(d_max, w - 1) + 1):
        raw0 = raw_distance_slice(f0, f1, d, 0)
        raw1 = np.zeros_like(raw0)
        # view-1 pixel x pairs with view-0 pixel x + d: the same pixel pair
        raw1[:, :w - d] = raw0[:, d:]
        vol0[:, :, d] = aggregate_window(raw0, window)
        vol1[:, :, d] = aggregate_window(raw1, window)
    vol0 *= disparity_validity(w, d_max, 0)[None]
    vol1 *= disparity_validity(w, d_max, 1)[None]
    return AffinityCostVolume(vol0, 0), AffinityCostVolume(vol1, 1)


# ---------------------------------------------------------------------------
# sparseness and saliency


def hoyer_sparseness(v) -> float:
    """Hoyer sparseness of a vector: 0 for constant vectors, 1 for one-hot ones."""
    v = np.abs(np.asarray(v, dtype=np.float64).ravel())
    n = v.size
    if n < 2:
        raise ValueError("sparseness needs at least two entries")
    l2 = np.sqrt(np.dot(v, v))
    if l2 == 0:
        return 0.0
    sqn = np.sqrt(n)
    return float(np.clip((sqn - v.sum() / l2) / (sqn - 1), 0.0, 1.0))


def _hoyer_from_norms(l1, l2sq, n):
    l1 = np.asarray(l1, np.float64)
    # box sums can drift a hair below zero
    l2 = np.sqrt(np.maximum(np.asarray(l2sq, np.float64), 0.0))
    sqn = np.sqrt(np.asarray(n, np.float64))
    ok = (l2 > 0) & (sqn > 1)
    out = np.zeros(np.broadcast(l1, l2, sqn).shape)
    num = sqn - np.divide(l1, l2, out=np.zeros_like(out), where=ok)
    np.divide(num, sqn - 1, out=out, where=ok)
    out[~ok] = 0.0
    return np.clip(out, 0.0, 1.0)


def affinity_sparseness(volume: AffinityCostVolume) -> np.ndarray:
    """Sparseness of each pixel's in-bounds affinity vector, read as goodness (worst cost minus cost)."""
    costs = volume.costs.astype(np.float64)
    valid = np.broadcast_to(volume.valid[None], costs.shape)
    worst = np.where(valid, costs, -np.inf).max(axis=2, keepdims=True)
    good = np.where(valid, worst - costs, 0.0)
    return _hoyer_from_norms(good.sum(axis=2), (good * good).sum(axis=2), valid.sum(axis=2))


def descriptor_patch_sparseness(field: DescriptorField, window: int = 15) -> np.ndarray:
    """Sparseness of the stacked descriptors in the ``window x window`` patch around each pixel."""
    vals = field.values.astype(np.float64)
    l1 = np.abs(vals).sum(axis=2)
    l2sq = (vals * vals).sum(axis=2)
    ones = np.ones(l1.shape)

    def box(a):
        return cv2.boxFilter(a, -1, (window, window), normalize=False, borderType=cv2.BORDER_CONSTANT)

    return _hoyer_from_norms(box(l1), box(l2sq), box(ones) * field.dim)


def build_saliency_map(volume: AffinityCostVolume, field: DescriptorField, cue: str,
                       provisional_mask=None, window: int = 15) -> SaliencyMap:
    weights = np.maximum(affinity_sparseness(volume), descriptor_patch_sparseness(field, window))
    if cue == SHAPE:
        if provisional_mask is None:
            raise ValueError("the shape cue needs the provisional foreground mask")
        weights = weights * as_mask(provisional_mask)
    elif cue != APPEARANCE:
        raise ValueError(f"unknown cue {cue!r}")
    return SaliencyMap(weights, cue)
