"""Synthetic two-modality stereo sequences with known masks and disparities."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .dataset_io import Correspondence, SequenceManifest, write_correspondences, write_image, write_manifest
from .evaluation import segmentation_metrics


@dataclass(frozen=True)
class SynthScenario:
    width: int = 320
    height: int = 240
    frames: int = 3
    d_star: int = 12
    bg_disparity: int = 4
    d_max: int = 24
    noise: float = 2.0
    corruption: float = 0.10
    invert: bool = True
    flat_region: bool = True
    flat_view: int = 1
    # flattened region takes this fraction of the way from background to foreground intensity
    flat_level: float = 0.0
    drop_flat_from_init: bool = False
    body: tuple[int, int] = (64, 120)  # width, height
    limb: tuple[int, int] = (40, 18)  # length, thickness
    limb_offset: int = 30
    velocity: tuple[int, int] = (3, 1)
    texture_sigma: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.d_star < self.d_max:
            raise ValueError("d_star must lie strictly between 0 and d_max")
        if not 0 <= self.bg_disparity <= self.d_max:
            raise ValueError("bg_disparity must lie in [0, d_max]")
        if self.noise < 0 or not 0 <= self.corruption < 1:
            raise ValueError("noise must be >= 0 and corruption in [0, 1)")
        if self.flat_view not in (0, 1):
            raise ValueError("flat_view must be 0 or 1")
        bw, bh = self.body
        lw, lt = self.limb
        span_x = bw + lw + self.d_star + abs(self.velocity[0]) * max(self.frames - 1, 0)
        span_y = bh + abs(self.velocity[1]) * max(self.frames - 1, 0)
        if span_x + 8 > self.width or span_y + 8 > self.height:
            raise ValueError("object and its motion do not fit inside the frame")
        if self.limb_offset + lt > bh:
            raise ValueError("limb must attach within the body height")


@dataclass
class SynthFrame:
    images: tuple[np.ndarray, np.ndarray]
    gt_masks: tuple[np.ndarray, np.ndarray]
    init_masks: tuple[np.ndarray, np.ndarray]
    limb_masks: tuple[np.ndarray, np.ndarray]
    flat_mask: np.ndarray
    correspondences: list[Correspondence]


def _texture(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    t = cv2.GaussianBlur(rng.standard_normal(shape).astype(np.float64), (0, 0), sigma)
    return t / (t.std() + 1e-12)


def _luminance(rgb: np.ndarray) -> np.ndarray:
    return rgb @ np.array([0.299, 0.587, 0.114])


def object_mask(sc: SynthScenario, origin: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Full object mask and its limb part for a body whose top-left corner is ``origin`` (x, y)."""
    h, w = sc.height, sc.width
    ox, oy = origin
    bw, bh = sc.body
    lw, lt = sc.limb
    full = np.zeros((h, w), np.uint8)
    limb = np.zeros((h, w), np.uint8)
    full[oy:oy + bh, ox:ox + bw] = 1
    ly = oy + sc.limb_offset
    limb[ly:ly + lt, ox + bw:ox + bw + lw] = 1
    full |= limb
    return full, limb


def corrupt_mask(mask: np.ndarray, rate: float, rng: np.random.Generator,
                 radii: tuple[int, int] = (3, 8)) -> np.ndarray:
    """Randomly dilate and erode the boundary with discs until ``rate`` of the area has changed."""
    out = mask.copy().astype(np.uint8)
    area = int(mask.sum())
    target = rate * area
    if target <= 0 or area == 0:
        return out
    h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w]
    changed = 0
    for _ in range(10000):
        if changed >= target:
            break
        edge = cv2.morphologyEx(out, cv2.MORPH_GRADIENT, np.ones((3, 3), np.uint8))
        ys, xs = np.nonzero(edge)
        if not len(ys):
            break
        i = rng.integers(len(ys))
        r = int(rng.integers(radii[0], radii[1] + 1))
        disc = (yy - ys[i]) ** 2 + (xx - xs[i]) ** 2 <= r * r
        value = int(rng.integers(2))
        flips = disc & (out != value)
        changed += int(flips.sum())
        out[disc] = value
    return out


def _origins(sc: SynthScenario) -> list[tuple[int, int]]:
    bw, bh = sc.body
    lw, _ = sc.limb
    span_x = bw + lw + abs(sc.velocity[0]) * max(sc.frames - 1, 0)
    span_y = bh + abs(sc.velocity[1]) * max(sc.frames - 1, 0)
    # centred, with room on the left for the disparity shift into view 1
    x0 = sc.d_star + (sc.width - sc.d_star - span_x) // 2
    y0 = (sc.height - span_y) // 2
    if sc.velocity[0] < 0:
        x0 += abs(sc.velocity[0]) * (sc.frames - 1)
    if sc.velocity[1] < 0:
        y0 += abs(sc.velocity[1]) * (sc.frames - 1)
    return [(x0 + t * sc.velocity[0], y0 + t * sc.velocity[1]) for t in range(sc.frames)]


def generate(sc: SynthScenario) -> list[SynthFrame]:
    """Render the scenario.

    View 0 is colour, view 1 grayscale. A view 1 pixel at ``x`` shows the
    view 0 content at ``x + d``; the object sits at ``d_star`` and the
    background plane at ``bg_disparity``.
    """
    rng = np.random.default_rng(sc.seed)
    h, w = sc.height, sc.width
    ext = w + sc.d_max + 1
    bw, bh = sc.body
    lw, _ = sc.limb
    ow, oh = bw + lw, bh

    bg_tex = _texture(rng, (h, ext), sc.texture_sigma)
    bg_tex2 = _texture(rng, (h, ext), sc.texture_sigma * 2)
    fg_tex = _texture(rng, (oh, ow), sc.texture_sigma)
    fg_tex2 = _texture(rng, (oh, ow), sc.texture_sigma * 2)
    bg_rgb = np.array([45.0, 65.0, 120.0])[None, None] + np.array([18.0, 20.0, 26.0])[None, None] * bg_tex[..., None]
    fg_rgb = np.array([225.0, 140.0, 45.0])[None, None] + np.array([22.0, 20.0, 14.0])[None, None] * fg_tex[..., None]
    bg_rgb = np.clip(bg_rgb, 0, 255)
    fg_rgb = np.clip(fg_rgb, 0, 255)

    def modality_b(rgb, tex2):
        lum = _luminance(rgb)
        base = 255.0 - lum if sc.invert else lum
        return np.clip(0.8 * base + 25.0 + 10.0 * tex2, 0, 255)

    bg_b = modality_b(bg_rgb, bg_tex2)
    fg_b = modality_b(fg_rgb, fg_tex2)

    ys, xs = np.mgrid[0:h, 0:w]
    frames = []
    for t, (ox, oy) in enumerate(_origins(sc)):
        m0, limb0 = object_mask(sc, (ox, oy))
        m1, limb1 = object_mask(sc, (ox - sc.d_star, oy))
        img0 = bg_rgb[:, :w].copy()
        img1 = bg_b[:, sc.bg_disparity:sc.bg_disparity + w].copy()
        sel0 = m0.astype(bool)
        img0[sel0] = fg_rgb[ys[sel0] - oy, xs[sel0] - ox]
        sel1 = m1.astype(bool)
        img1[sel1] = fg_b[ys[sel1] - oy, xs[sel1] - (ox - sc.d_star)]

        limb = limb1 if sc.flat_view == 1 else limb0
        flat = cv2.dilate(limb, np.ones((7, 7), np.uint8)).astype(bool) if sc.flat_region else np.zeros((h, w), bool)
        if flat.any():
            body = (m1 if sc.flat_view == 1 else m0).astype(bool) & ~limb.astype(bool)
            img = img1 if sc.flat_view == 1 else img0
            outside = ~(m1 if sc.flat_view == 1 else m0).astype(bool)
            fg_level = img[body].mean(axis=0)
            bg_level = img[outside].mean(axis=0)
            level = bg_level + sc.flat_level * (fg_level - bg_level)
            img[flat & ~body] = level

        noise_rng = np.random.default_rng([sc.seed, t, 1])
        img0 = np.clip(np.rint(img0 + sc.noise * noise_rng.standard_normal(img0.shape)), 0, 255).astype(np.uint8)
        img1 = np.clip(np.rint(img1 + sc.noise * noise_rng.standard_normal(img1.shape)), 0, 255).astype(np.uint8)

        crng = np.random.default_rng([sc.seed, t, 2])
        init0 = corrupt_mask(m0, sc.corruption, crng)
        init1 = corrupt_mask(m1, sc.corruption, crng)
        if sc.flat_region and sc.drop_flat_from_init:
            # a single-view segmenter cannot see the flattened limb
            drop = flat & ~(m1 if sc.flat_view == 1 else m0).astype(bool) | (limb1 if sc.flat_view == 1 else limb0).astype(bool)
            (init1 if sc.flat_view == 1 else init0)[drop] = 0

        corr = []
        for view, m in ((0, m0), (1, m1)):
            py, px = np.nonzero(m)
            keep = (py % 4 == 0) & (px % 4 == 0)
            corr += [Correspondence(t, view, int(x), int(y), float(sc.d_star)) for y, x in zip(py[keep], px[keep])]
        frames.append(SynthFrame((img0, img1), (m0, m1), (init0, init1), (limb0, limb1), flat, corr))
    return frames


def write_sequence(sc: SynthScenario, directory) -> tuple[Path, list[SynthFrame]]:
    """Write frames, masks, correspondences and a manifest; returns the manifest path."""
    d = Path(directory)
    for sub in ("view0", "view1", "init0", "init1", "gt0", "gt1", "limb0", "limb1"):
        (d / sub).mkdir(parents=True, exist_ok=True)
    frames = generate(sc)
    corr = []
    for t, f in enumerate(frames):
        for k in (0, 1):
            write_image(d / f"view{k}" / f"{t:04d}.png", f.images[k])
            write_image(d / f"init{k}" / f"{t:04d}.png", f.init_masks[k] * 255)
            write_image(d / f"gt{k}" / f"{t:04d}.png", f.gt_masks[k] * 255)
            write_image(d / f"limb{k}" / f"{t:04d}.png", f.limb_masks[k] * 255)
        corr += f.correspondences
    write_correspondences(d / "correspondences.csv", corr)
    manifest = SequenceManifest(
        root=Path("."),
        view_patterns=("view0/{frame:04d}.png", "view1/{frame:04d}.png"),
        d_max=sc.d_max,
        init_patterns=("init0/{frame:04d}.png", "init1/{frame:04d}.png"),
        gt_patterns=("gt0/{frame:04d}.png", "gt1/{frame:04d}.png"),
        correspondences="correspondences.csv",
        frames=sc.frames,
        modalities=("visible", "lwir"),
    )
    path = d / "sequence.txt"
    write_manifest(path, manifest)
    return path, frames


def init_f1(frames: list[SynthFrame]) -> list[tuple[float, float]]:
    return [tuple(segmentation_metrics(f.init_masks[k], f.gt_masks[k]).f1 for k in (0, 1)) for f in frames]
