"""Sequence manifests, image and mask loading, fallback initialization and result writing."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .core import FramePair, MutualSegError, as_channels

DISPARITY_SCALE = 256
_MANIFEST_KEYS = {
    "root", "view0", "view1", "init0", "init1", "gt0", "gt1", "correspondences",
    "d_max", "frames", "start", "modality0", "modality1",
}


class DatasetError(MutualSegError):
    pass


@dataclass
class SequenceManifest:
    root: Path
    view_patterns: tuple[str, str]
    d_max: int
    init_patterns: tuple[str | None, str | None] = (None, None)
    gt_patterns: tuple[str | None, str | None] = (None, None)
    correspondences: str | None = None
    frames: int | None = None
    start: int = 0
    modalities: tuple[str, str] = ("visible", "lwir")

    def path(self, pattern: str, frame: int) -> Path:
        return self.root / pattern.format(frame=frame)

    def frame_indices(self) -> list[int]:
        if self.frames is not None:
            return list(range(self.start, self.start + self.frames))
        out = []
        t = self.start
        while self.path(self.view_patterns[0], t).exists():
            out.append(t)
            t += 1
        return out


def parse_manifest(path) -> SequenceManifest:
    """Read a ``key=value`` manifest; relative roots resolve against the manifest's folder."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read manifest ({exc})") from exc
    kv = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DatasetError(f"{path}:{n}: expected key=value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in _MANIFEST_KEYS:
            raise DatasetError(f"{path}:{n}: unknown manifest key {k!r}")
        kv[k] = v
    for k in ("view0", "view1", "d_max"):
        if k not in kv:
            raise DatasetError(f"{path}: missing required key {k!r}")
    root = Path(kv.get("root", "."))
    if not root.is_absolute():
        root = path.parent / root
    try:
        d_max = int(kv["d_max"])
        frames = int(kv["frames"]) if "frames" in kv else None
        start = int(kv.get("start", 0))
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    if d_max < 1:
        raise DatasetError(f"{path}: d_max must be >= 1")
    return SequenceManifest(
        root=root,
        view_patterns=(kv["view0"], kv["view1"]),
        d_max=d_max,
        init_patterns=(kv.get("init0"), kv.get("init1")),
        gt_patterns=(kv.get("gt0"), kv.get("gt1")),
        correspondences=kv.get("correspondences"),
        frames=frames,
        start=start,
        modalities=(kv.get("modality0", "visible"), kv.get("modality1", "lwir")),
    )


def write_manifest(path, manifest: SequenceManifest) -> None:
    lines = [f"root={manifest.root}", f"view0={manifest.view_patterns[0]}", f"view1={manifest.view_patterns[1]}",
             f"d_max={manifest.d_max}", f"start={manifest.start}",
             f"modality0={manifest.modalities[0]}", f"modality1={manifest.modalities[1]}"]
    if manifest.frames is not None:
        lines.append(f"frames={manifest.frames}")
    for key, pats in (("init", manifest.init_patterns), ("gt", manifest.gt_patterns)):
        for k, p in enumerate(pats):
            if p is not None:
                lines.append(f"{key}{k}={p}")
    if manifest.correspondences is not None:
        lines.append(f"correspondences={manifest.correspondences}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# images


def read_image(path, frame: int | None = None) -> np.ndarray:
    """8-bit grayscale (HxW) or RGB (HxWx3) image as uint8."""
    where = f"{path}" if frame is None else f"{path} (frame {frame})"
    if not Path(path).exists():
        raise DatasetError(f"{where}: file not found")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DatasetError(f"{where}: unreadable image")
    if img.dtype != np.uint8:
        raise DatasetError(f"{where}: expected 8-bit image, got {img.dtype}")
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[:, :, :3]
        if img.shape[2] != 3:
            raise DatasetError(f"{where}: unsupported channel count {img.shape[2]}")
        if np.array_equal(img[:, :, 0], img[:, :, 1]) and np.array_equal(img[:, :, 1], img[:, :, 2]):
            return img[:, :, 0].copy()
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    return img


def read_mask(path, frame: int | None = None) -> np.ndarray:
    img = read_image(path, frame)
    if img.ndim == 3:
        img = img.max(axis=2)
    return (img >= 128).astype(np.uint8)


def write_image(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 3:
        img = cv2.cvtColor(img.astype(np.uint8), cv2.COLOR_RGB2BGR)
    try:
        ok = cv2.imwrite(str(path), img)
    except cv2.error as exc:
        raise DatasetError(f"{path}: cannot write image ({exc})") from exc
    if not ok:
        raise DatasetError(f"{path}: cannot write image")


# ---------------------------------------------------------------------------
# correspondences


@dataclass(frozen=True)
class Correspondence:
    frame: int
    view: int
    x: int
    y: int
    disparity: float


def read_correspondences(path) -> list[Correspondence]:
    """CSV with header ``frame,view,x,y,disparity``."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read correspondences ({exc})") from exc
    out = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "view", "x", "y", "disparity"]:
            raise DatasetError(f"{path}: header must be frame,view,x,y,disparity")
        for n, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                c = Correspondence(int(row[0]), int(row[1]), int(row[2]), int(row[3]), float(row[4]))
            except (ValueError, IndexError) as exc:
                raise DatasetError(f"{path}:{n}: malformed row {row!r}") from exc
            if c.view not in (0, 1) or c.disparity < 0 or c.x < 0 or c.y < 0:
                raise DatasetError(f"{path}:{n}: invalid correspondence {row!r}")
            out.append(c)
    return out


def write_correspondences(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "view", "x", "y", "disparity"])
        for c in rows:
            d = c.disparity
            w.writerow([c.frame, c.view, c.x, c.y, int(d) if float(d).is_integer() else d])


# ---------------------------------------------------------------------------
# sequence streaming


@dataclass
class SequenceItem:
    pair: FramePair
    init_masks: list[np.ndarray | None]
    gt_masks: list[np.ndarray | None]


def _optional_mask(manifest: SequenceManifest, pattern: str | None, t: int, shape) -> np.ndarray | None:
    if pattern is None:
        return None
    p = manifest.path(pattern, t)
    if not p.exists():
        return None
    m = read_mask(p, t)
    if m.shape != shape:
        raise DatasetError(f"{p} (frame {t}): mask is {m.shape[1]}x{m.shape[0]}, frame is {shape[1]}x{shape[0]}")
    return m


def load_sequence(manifest: SequenceManifest):
    """Yield one :class:`SequenceItem` per frame in index order."""
    indices = manifest.frame_indices()
    if not indices:
        raise DatasetError(f"{manifest.root}: no frames found for {manifest.view_patterns[0]}")
    for t in indices:
        imgs = [read_image(manifest.path(p, t), t) for p in manifest.view_patterns]
        if imgs[0].shape[:2] != imgs[1].shape[:2]:
            raise DatasetError(
                f"frame {t}: view sizes differ ({imgs[0].shape[1]}x{imgs[0].shape[0]} vs "
                f"{imgs[1].shape[1]}x{imgs[1].shape[0]})"
            )
        shape = imgs[0].shape[:2]
        pair = FramePair(tuple(imgs), frame_index=t, modalities=manifest.modalities)
        yield SequenceItem(
            pair,
            [_optional_mask(manifest, p, t, shape) for p in manifest.init_patterns],
            [_optional_mask(manifest, p, t, shape) for p in manifest.gt_patterns],
        )


class FallbackInitializer:
    """Running temporal-median background model for one view.

    The first frame yields an empty mask flagged degenerate.
    """

    def __init__(self, threshold: float = 30.0, history: int = 25):
        self.threshold = threshold
        self.history = history
        self._frames: list[np.ndarray] = []
        self.degenerate = False

    def __call__(self, image) -> np.ndarray:
        img = as_channels(image)
        if not self._frames:
            self.degenerate = True
            mask = np.zeros(img.shape[:2], np.uint8)
        else:
            self.degenerate = False
            bg = np.median(np.stack(self._frames), axis=0)
            dev = np.abs(img - bg).max(axis=2)
            mask = (dev > self.threshold).astype(np.uint8)
            mask = cv2.morphologyEx(mask, cv2.MORPH_OPEN, np.ones((3, 3), np.uint8))
        self._frames.append(img)
        del self._frames[:-self.history]
        return mask


# ---------------------------------------------------------------------------
# outputs


def mask_filename(view: int, frame: int) -> str:
    return f"mask_v{view}_{frame:04d}.png"


def disparity_filename(view: int, frame: int) -> str:
    return f"disp_v{view}_{frame:04d}.png"


@dataclass
class OutputWriter:
    directory: Path
    written: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.directory = Path(self.directory)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DatasetError(f"{self.directory}: cannot create output directory ({exc})") from exc

    def write(self, frame_index: int, masks, disparities) -> None:
        write_outputs(self.directory, frame_index, masks, disparities)
        self.written.append(frame_index)


def write_outputs(directory, frame_index: int, masks, disparities) -> list[Path]:
    """Write per-view masks (0/255 PNG) and disparities (16-bit PNG, value x256)."""
    directory = Path(directory)
    paths = []
    for k, (m, d) in enumerate(zip(masks, disparities)):
        mp = directory / mask_filename(k, frame_index)
        write_image(mp, (np.asarray(m) > 0).astype(np.uint8) * 255)
        dp = directory / disparity_filename(k, frame_index)
        scaled = np.rint(np.asarray(d, dtype=np.float64) * DISPARITY_SCALE)
        if scaled.min(initial=0) < 0 or scaled.max(initial=0) > 65535:
            raise DatasetError(f"{dp}: disparity out of the storable range")
        write_image(dp, scaled.astype(np.uint16))
        paths += [mp, dp]
    sidecar = directory / "outputs.json"
    meta = {"disparity_scale": DISPARITY_SCALE, "mask_values": [0, 255]}
    if not sidecar.exists():
        try:
            sidecar.write_text(json.dumps(meta, indent=2) + "\n")
        except OSError as exc:
            raise DatasetError(f"{sidecar}: cannot write ({exc})") from exc
    return paths


def read_disparity(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None or img.dtype != np.uint16 or img.ndim != 2:
        raise DatasetError(f"{path}: expected a single-channel 16-bit disparity PNG")
    return img.astype(np.float64) / DISPARITY_SCALE
