"""Optical flow providers used for temporal cliques and disparity warm starts.

A flow field maps each pixel of frame t to its position in frame t-1:
``prev_position = (x + dx, y + dy)``.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .core import MutualSegError, as_channels

FLO_MAGIC = 202021.25


class FlowFileError(MutualSegError):
    pass


def compute_block_flow(frame_t, frame_prev, block: int = 8, radius: int = 8) -> np.ndarray:
    """Integer SAD block matching, bilinearly densified; returns ``H x W x 2`` (dx, dy)."""
    cur = as_channels(frame_t).astype(np.float32)
    prev = as_channels(frame_prev).astype(np.float32)
    if cur.shape != prev.shape:
        raise ValueError(f"frame shapes differ: {cur.shape} vs {prev.shape}")
    h, w, _ = cur.shape
    by, bx = max(h // block, 1), max(w // block, 1)
    ch, cw = by * block, bx * block
    padded = cv2.copyMakeBorder(prev, radius, radius, radius, radius, cv2.BORDER_REPLICATE)
    if padded.ndim == 2:
        padded = padded[:, :, None]
    core = cur[:ch, :cw]
    best = np.full((by, bx), np.inf, np.float32)
    best_d = np.zeros((by, bx, 2), np.float32)
    # smallest displacements first so ties keep the shortest vector
    disps = sorted(((dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)),
                   key=lambda v: (v[0] ** 2 + v[1] ** 2, v[1], v[0]))
    for dx, dy in disps:
        ref = padded[radius + dy:radius + dy + ch, radius + dx:radius + dx + cw]
        sad = np.abs(core - ref).sum(axis=2).reshape(by, block, bx, block).sum(axis=(1, 3))
        better = sad < best
        best[better] = sad[better]
        best_d[better] = (dx, dy)
    if by == 1 and bx == 1:
        return np.broadcast_to(best_d[0, 0], (h, w, 2)).copy().astype(np.float64)
    # block centres sit at (i + 0.5) * block, which is what INTER_LINEAR resizing assumes
    dense = cv2.resize(best_d, (cw, ch), interpolation=cv2.INTER_LINEAR)
    if (ch, cw) != (h, w):
        dense = cv2.copyMakeBorder(dense, 0, h - ch, 0, w - cw, cv2.BORDER_REPLICATE)
    return dense.astype(np.float64)


def zero_flow(shape) -> np.ndarray:
    return np.zeros(tuple(shape[:2]) + (2,))


def write_flow_file(path, flow: np.ndarray) -> None:
    flow = np.asarray(flow, dtype="<f4")
    h, w, _ = flow.shape
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], "<f4").tobytes())
        fh.write(np.array([w, h], "<i4").tobytes())
        fh.write(flow.tobytes())


def load_flow_file(path, expected_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Read a little-endian ``.flo`` file into ``H x W x 2`` float64."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FlowFileError(f"{path}: cannot read flow file ({exc})") from exc
    if len(raw) < 12:
        raise FlowFileError(f"{path}: truncated header")
    magic = np.frombuffer(raw[:4], "<f4")[0]
    if magic != np.float32(FLO_MAGIC):
        raise FlowFileError(f"{path}: bad magic number {magic!r}")
    w, h = (int(v) for v in np.frombuffer(raw[4:12], "<i4"))
    if w <= 0 or h <= 0:
        raise FlowFileError(f"{path}: invalid dimensions {w}x{h}")
    if len(raw) - 12 != w * h * 8:
        raise FlowFileError(f"{path}: expected {w * h * 8} data bytes for {w}x{h}, found {len(raw) - 12}")
    if expected_shape is not None and (h, w) != tuple(expected_shape):
        raise FlowFileError(
            f"{path}: flow is {w}x{h} but frames are {expected_shape[1]}x{expected_shape[0]}"
        )
    flow = np.frombuffer(raw[12:], "<f4").reshape(h, w, 2).astype(np.float64)
    if not np.all(np.isfinite(flow)):
        raise FlowFileError(f"{path}: non-finite flow values")
    return flow


def chain_and_round(anchors: np.ndarray, flows: list[np.ndarray], shape: tuple[int, int]) -> np.ndarray:
    """Follow anchors back through per-layer flows.

    ``anchors`` holds ``(y, x)`` rows in layer 0; ``flows[l]`` maps layer
    ``l`` onto layer ``l + 1``. Returns ``n x (len(flows)+1) x 2``.
    """
    h, w = shape
    anchors = np.asarray(anchors, dtype=np.int64)
    out = np.empty((len(anchors), len(flows) + 1, 2), dtype=np.int64)
    out[:, 0] = anchors
    cur = anchors
    for l, flow in enumerate(flows):
        vec = flow[cur[:, 0], cur[:, 1]]
        ys = np.clip(np.rint(cur[:, 0] + vec[:, 1]), 0, h - 1).astype(np.int64)
        xs = np.clip(np.rint(cur[:, 1] + vec[:, 0]), 0, w - 1).astype(np.int64)
        cur = np.stack([ys, xs], axis=1)
        out[:, l + 1] = cur
    return out


def stride_anchors(shape: tuple[int, int], stride: int) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h:stride, 0:w:stride]
    return np.stack([ys.ravel(), xs.ravel()], axis=1).astype(np.int64)


def warp_labels(labels: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Pull a previous frame's label map onto the current frame through ``flow``."""
    h, w = labels.shape
    ys, xs = np.mgrid[0:h, 0:w]
    py = np.clip(np.rint(ys + flow[:, :, 1]), 0, h - 1).astype(np.int64)
    px = np.clip(np.rint(xs + flow[:, :, 0]), 0, w - 1).astype(np.int64)
    return labels[py, px]


class BlockFlowProvider:
    name = "block"

    def __init__(self, block: int = 8, radius: int = 8):
        self.block, self.radius = block, radius

    def __call__(self, frame_t, frame_prev, frame_index: int | None = None) -> np.ndarray:
        return compute_block_flow(frame_t, frame_prev, self.block, self.radius)


class ZeroFlowProvider:
    name = "zero"

    def __call__(self, frame_t, frame_prev, frame_index: int | None = None) -> np.ndarray:
        return zero_flow(np.asarray(frame_t).shape)


class FileFlowProvider:
    """Reads ``pattern.format(frame=t)`` for the flow from frame t to frame t-1."""

    name = "files"

    def __init__(self, pattern: str):
        self.pattern = pattern

    def __call__(self, frame_t, frame_prev, frame_index: int | None = None) -> np.ndarray:
        if frame_index is None:
            raise FlowFileError("file-based flow needs the frame index")
        return load_flow_file(self.pattern.format(frame=frame_index), np.asarray(frame_t).shape[:2])
