"""Segmentation and registration scores plus report tables."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from .core import as_mask

log = logging.getLogger(__name__)

POOLED, PER_FRAME, BOTH = "pooled", "per-frame", "both"


@dataclass(frozen=True)
class SegmScores:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        if self.tp == 0:
            return 0.0
        pr, re = self.precision, self.recall
        return 2 * pr * re / (pr + re)


def f1_from(pr: float, re: float) -> float:
    return 0.0 if pr + re == 0 else 2 * pr * re / (pr + re)


def segmentation_metrics(pred, gt) -> SegmScores:
    p = as_mask(pred).astype(bool)
    g = as_mask(gt).astype(bool)
    if p.shape != g.shape:
        raise ValueError(f"mask sizes differ: {p.shape} vs {g.shape}")
    return SegmScores(int((p & g).sum()), int((p & ~g).sum()), int((~p & g).sum()))


@dataclass(frozen=True)
class RegistrationScores:
    thresholds: tuple[float, ...]
    over: tuple[int, ...]  # points whose error exceeds each threshold
    error_sum: float
    count: int
    skipped: int = 0

    @property
    def percentages(self) -> tuple[float, ...]:
        if not self.count:
            return tuple(0.0 for _ in self.thresholds)
        return tuple(100.0 * o / self.count for o in self.over)

    @property
    def mean_error(self) -> float:
        return self.error_sum / self.count if self.count else 0.0


def registration_metrics(pred_disparities: dict, correspondences, thresholds=(1, 2, 4)) -> RegistrationScores:
    """Score disparities against sparse annotations.

    ``pred_disparities`` maps ``(frame, view)`` to a disparity map. Points
    outside the map are skipped and counted; points for frames or views
    without a prediction raise ``KeyError``.
    """
    thresholds = tuple(thresholds)
    errors = []
    skipped = 0
    for c in correspondences:
        d = pred_disparities[(c.frame, c.view)]
        h, w = d.shape
        if not (0 <= c.x < w and 0 <= c.y < h):
            skipped += 1
            continue
        errors.append(abs(float(d[c.y, c.x]) - float(c.disparity)))
    if skipped:
        log.warning("%d annotated points fell outside the evaluated maps", skipped)
    e = np.asarray(errors, dtype=np.float64)
    return RegistrationScores(thresholds, tuple(int((e > t).sum()) for t in thresholds),
                              float(e.sum()), len(e), skipped)


def pool_registration(scores: list[RegistrationScores]) -> RegistrationScores:
    if not scores:
        raise ValueError("no registration scores to aggregate")
    th = scores[0].thresholds
    return RegistrationScores(th, tuple(int(sum(s.over[i] for s in scores)) for i in range(len(th))),
                              float(sum(s.error_sum for s in scores)), sum(s.count for s in scores),
                              sum(s.skipped for s in scores))


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SegmRow:
    group: str
    mode: str
    precision: float
    recall: float
    f1: float
    frames: int


def aggregate_segmentation(scores: dict, mode: str = POOLED, group: str = "overall") -> list[SegmRow]:
    """Aggregate per-frame scores (a mapping or list) by count pooling, per-frame means, or both."""
    items = list(scores.values()) if isinstance(scores, dict) else list(scores)
    if not items:
        raise ValueError("no scored frames to aggregate")
    if mode not in (POOLED, PER_FRAME, BOTH):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    rows = []
    if mode in (POOLED, BOTH):
        s = SegmScores(sum(i.tp for i in items), sum(i.fp for i in items), sum(i.fn for i in items))
        rows.append(SegmRow(group, POOLED, s.precision, s.recall, s.f1, len(items)))
    if mode in (PER_FRAME, BOTH):
        rows.append(SegmRow(group, PER_FRAME, float(np.mean([i.precision for i in items])),
                            float(np.mean([i.recall for i in items])), float(np.mean([i.f1 for i in items])),
                            len(items)))
    return rows


def segmentation_report(per_frame: dict, mode: str = POOLED) -> list[SegmRow]:
    """Rows per view plus overall; ``per_frame`` maps ``(frame, view)`` to :class:`SegmScores`."""
    rows = []
    for view in sorted({k[1] for k in per_frame}):
        sub = [v for k, v in sorted(per_frame.items()) if k[1] == view]
        rows += aggregate_segmentation(sub, mode, f"view{view}")
    rows += aggregate_segmentation([v for _, v in sorted(per_frame.items())], mode, "overall")
    return rows


def segmentation_table(rows: list[SegmRow]) -> tuple[list[str], list[list[str]]]:
    header = ["group", "mode", "Pr", "Re", "F1", "frames"]
    body = [[r.group, r.mode, f"{r.precision:.3f}", f"{r.recall:.3f}", f"{r.f1:.3f}", str(r.frames)] for r in rows]
    return header, body


def registration_table(groups: dict) -> tuple[list[str], list[list[str]]]:
    """``groups`` maps a label to :class:`RegistrationScores`."""
    first = next(iter(groups.values()))
    header = ["group"] + [f"%err>{t:g}px" for t in first.thresholds] + ["mean_err", "points"]
    body = []
    for name, s in groups.items():
        body.append([name] + [f"{p:.1f}" for p in s.percentages] + [f"{s.mean_error:.2f}", str(s.count)])
    return header, body


def to_csv(header, body) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()


def to_text(header, body) -> str:
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
