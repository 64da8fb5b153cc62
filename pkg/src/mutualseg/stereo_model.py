"""Stereo registration energy and its move-cost estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DisparityLabeling, GradientMap, gradient_scale, rectified_shift
from .descriptors import AffinityCostVolume, SaliencyMap


@dataclass(frozen=True)
class StereoParams:
    lambda_u: float = 0.4
    lambda_s1: float = 0.001
    w: float = 3.0
    g: float = 30.0
    truncation: int = 10
    use_appearance: bool = True
    use_shape: bool = True
    use_saliency: bool = True
    use_uniqueness: bool = True

    def __post_init__(self):
        if self.lambda_u < 0 or self.lambda_s1 < 0:
            raise ValueError("stereo weights must be non-negative")
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")
        if self.g <= 0:
            raise ValueError("g must be positive")


@dataclass(frozen=True)
class StereoEnergyBreakdown:
    appearance: float
    shape: float
    uniqueness: float
    smoothness: float

    @property
    def total(self) -> float:
        return self.appearance + self.shape + self.uniqueness + self.smoothness

    def as_dict(self) -> dict:
        return {"appearance": self.appearance, "shape": self.shape, "uniqueness": self.uniqueness,
                "smoothness": self.smoothness, "total": self.total}


def gather_costs(costs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.take_along_axis(costs, labels[:, :, None], axis=2)[:, :, 0]


def data_term_cost(volume: AffinityCostVolume, saliency: SaliencyMap, labeling: DisparityLabeling) -> float:
    per_pixel = gather_costs(volume.costs, labeling.labels).astype(np.float64)
    return float((per_pixel * saliency.weights).sum())


def uniqueness_cost(n, w: float = 3.0):
    """Soft many-to-one penalty for a pixel matched ``n`` times; 0 for ``n <= 1``.

    Vectorized over integer arrays.
    """
    n = np.asarray(n)
    top = int(n.max()) if n.size else 0
    # cumulative table: table[m] = sum_{k=1}^{m-1} w k / (w + k - 1)
    k = np.arange(1, max(top, 1))
    inc = w * k / (w + k - 1)
    table = np.concatenate([[0.0, 0.0], np.cumsum(inc)])[: max(top, 1) + 1]
    out = table[np.clip(n, 0, None)]
    return float(out) if out.ndim == 0 else out


def charge_term(n, w: float):
    """Marginal cost of adding one correspondence to a pixel currently matched ``n`` times."""
    n = np.asarray(n, dtype=np.float64)
    den = w + n - 1
    return np.divide(w * n, den, out=np.zeros_like(n), where=den > 0)


def refund_term(n, w: float):
    """Average uniqueness cost per correspondence of a pixel matched ``n`` times (0 when unmatched)."""
    n = np.asarray(n)
    u = np.asarray(uniqueness_cost(n, w), dtype=np.float64)
    return np.divide(u, n, out=np.zeros_like(u), where=n > 0)


def uniqueness_move_delta(p: tuple[int, int], d_old: int, d_new: int, labeling: DisparityLabeling,
                          params: StereoParams) -> float:
    """Upper bound on the uniqueness energy change of relabelling ``p`` from ``d_old`` to ``d_new``."""
    width = labeling.labels.shape[1]
    old = rectified_shift(p, d_old, labeling.view, width)
    new = rectified_shift(p, d_new, labeling.view, width)
    refund = 0.0 if old is None else float(refund_term(labeling.counts[old[1], old[0]], params.w))
    charge = 0.0 if new is None else float(charge_term(labeling.counts[new[1], new[0]], params.w))
    return params.lambda_u * (charge - refund)


def pairwise_disparity_cost(da, db, grad_scale, params: StereoParams):
    diff = np.minimum(np.abs(np.asarray(da) - np.asarray(db)), params.truncation).astype(np.float64)
    return params.lambda_s1 * diff * diff * grad_scale


def edge_scales(grads: GradientMap, g: float) -> tuple[np.ndarray, np.ndarray]:
    return gradient_scale(grads.horizontal, g), gradient_scale(grads.vertical, g)


def smoothness_cost(labeling: DisparityLabeling, grads: GradientMap, params: StereoParams) -> float:
    d = labeling.labels
    gh, gv = edge_scales(grads, params.g)
    return float(pairwise_disparity_cost(d[:, :-1], d[:, 1:], gh, params).sum()
                 + pairwise_disparity_cost(d[:-1, :], d[1:, :], gv, params).sum())


def total_stereo_energy(labeling: DisparityLabeling, volumes: dict, saliencies: dict, grads: GradientMap,
                        params: StereoParams) -> StereoEnergyBreakdown:
    """Full stereo energy of one view.

    ``volumes`` and ``saliencies`` map cue names (``"appearance"``,
    ``"shape"``) to that cue's cost volume and saliency; missing cues
    contribute 0. Correspondence counts are checked against a recount.
    """
    labeling.check_counts()
    parts = {}
    for cue in ("appearance", "shape"):
        vol, sal = volumes.get(cue), saliencies.get(cue)
        parts[cue] = 0.0 if vol is None else data_term_cost(vol, sal, labeling)
    uniq = params.lambda_u * float(np.sum(uniqueness_cost(labeling.counts, params.w))) if params.use_uniqueness else 0.0
    return StereoEnergyBreakdown(parts["appearance"], parts["shape"], uniq, smoothness_cost(labeling, grads, params))
