"""Segmentation energy: colour mixtures, cross-view contours, smoothness and temporal coherence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.ndimage import distance_transform_edt
from scipy.special import logsumexp

from .core import as_channels, as_mask, channel_max_diff, gradient_scale, sample_shifted, shifted_columns

DENSITY_FLOOR = 1e-30


@dataclass(frozen=True)
class SegmParams:
    lambda_c: float = 7.0
    lambda_s2: float = 7.0
    lambda_m: float = 0.5
    g: float = 30.0
    gmm_components: int = 6
    temporal_stride: int = 2
    layers: int = 2
    contour_tau: float = 4.0
    contour_cap: float = 32.0
    gmm_eps: float = 1e-2
    gmm_max_samples: int = 20000
    use_color: bool = True
    use_contour: bool = True
    use_cross_contour: bool = True
    use_temporal: bool = True

    def __post_init__(self):
        # lambda_m = 0 is the single-view ablation
        if not 0 <= self.lambda_m <= 1:
            raise ValueError("lambda_m must lie in [0, 1]")
        if self.lambda_c < 0 or self.lambda_s2 < 0:
            raise ValueError("segmentation weights must be non-negative")
        if self.gmm_components < 1 or self.layers < 1 or self.temporal_stride < 1:
            raise ValueError("gmm_components, layers and temporal_stride must be >= 1")
        if self.contour_tau <= 0 or self.contour_cap <= 0 or self.g <= 0:
            raise ValueError("contour_tau, contour_cap and g must be positive")


# ---------------------------------------------------------------------------
# colour model


@dataclass
class GaussianMixture:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, C)
    covs: np.ndarray  # (K, C, C)
    degenerate: bool = False

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log of the mixture density at each row of ``x`` (N x C)."""
        x = np.asarray(x, dtype=np.float64)
        return logsumexp(self._component_log_terms(x), axis=1)

    def _component_log_terms(self, x: np.ndarray) -> np.ndarray:
        n, c = x.shape
        out = np.empty((n, self.n_components))
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        for k in range(self.n_components):
            chol = np.linalg.cholesky(self.covs[k])
            sol = solve_triangular(chol, (x - self.means[k]).T, lower=True, check_finite=False)
            maha = np.einsum("ij,ij->j", sol, sol)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, k] = logw[k] - 0.5 * (c * np.log(2 * np.pi) + logdet + maha)
        return out


@dataclass
class ColorModel:
    foreground: GaussianMixture
    background: GaussianMixture

    @property
    def degenerate(self) -> bool:
        return self.foreground.degenerate or self.background.degenerate

    def pixel_costs(self, image) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel ``(-log h_fg, -log h_bg)`` maps, densities floored."""
        img = as_channels(image)
        h, w, c = img.shape
        flat = img.reshape(-1, c)
        inverse = None
        if flat.size and np.array_equal(flat, np.rint(flat)) and flat.min() >= 0 and flat.max() <= 255:
            # 8-bit images repeat colours heavily; evaluate each colour once
            packed = flat.astype(np.int64) @ (256 ** np.arange(c - 1, -1, -1))
            keys, first, inverse = np.unique(packed, return_index=True, return_inverse=True)
            flat = flat[first]
        floor = np.log(DENSITY_FLOOR)
        fg = -np.maximum(self.foreground.log_density(flat), floor)
        bg = -np.maximum(self.background.log_density(flat), floor)
        if inverse is not None:
            inverse = inverse.ravel()
            fg, bg = fg[inverse], bg[inverse]
        return fg.reshape(h, w), bg.reshape(h, w)


def kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """k-means++ seeding followed by Lloyd iterations.

    Seeding stops early once every point coincides with a centre, so fewer
    than ``k`` centres come back for data with fewer distinct colours.
    """
    centres = [x[rng.integers(len(x))]]
    d2 = ((x - centres[0]) ** 2).sum(axis=1)
    while len(centres) < k:
        total = d2.sum()
        if total <= 0:
            break
        idx = rng.choice(len(x), p=d2 / total)
        centres.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    centres = np.array(centres, dtype=np.float64)
    assign = np.zeros(len(x), dtype=np.int64)
    for _ in range(iters):
        dist = ((x[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        new_assign = dist.argmin(axis=1)
        for j in range(len(centres)):
            members = x[new_assign == j]
            if len(members):
                centres[j] = members.mean(axis=0)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return centres, assign


def _m_step(x: np.ndarray, resp: np.ndarray, eps: float) -> GaussianMixture:
    n, c = x.shape
    nk = resp.sum(axis=0)
    weights = nk / n
    means = np.zeros((len(nk), c))
    covs = np.empty((len(nk), c, c))
    glob = x.mean(axis=0)
    for k in range(len(nk)):
        if nk[k] <= 1e-12:
            means[k] = glob
            covs[k] = np.cov(x.T).reshape(c, c) + eps * np.eye(c) if n > 1 else eps * np.eye(c)
            continue
        means[k] = resp[:, k] @ x / nk[k]
        diff = x - means[k]
        covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k] + eps * np.eye(c)
    return GaussianMixture(weights, means, covs)


def fit_gmm(x: np.ndarray, n_components: int, rng: np.random.Generator, eps: float = 1e-2, max_iter: int = 20,
            tol: float = 1e-4, init: GaussianMixture | None = None) -> tuple[GaussianMixture, list[float]]:
    """EM fit of a Gaussian mixture; returns the model and the mean log-likelihood after each E-step."""
    x = np.asarray(x, dtype=np.float64)
    if init is None:
        centres, assign = kmeans_pp(x, n_components, rng)
        resp = np.zeros((len(x), len(centres)))
        resp[np.arange(len(x)), assign] = 1.0
        model = _m_step(x, resp, eps)
    else:
        model = init
    history: list[float] = []
    for _ in range(max_iter):
        terms = model._component_log_terms(x)
        ll_point = logsumexp(terms, axis=1)
        ll = float(ll_point.mean())
        history.append(ll)
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            break
        resp = np.exp(terms - ll_point[:, None])
        model = _m_step(x, resp, eps)
    return model, history


def _degenerate_mixture(img: np.ndarray) -> GaussianMixture:
    c = img.shape[2]
    flat = img.reshape(-1, c)
    var = flat.var(axis=0).mean() if len(flat) > 1 else 0.0
    spread = max(var, 1.0) + 64.0 ** 2
    return GaussianMixture(np.ones(1), flat.mean(axis=0, keepdims=True), spread * np.eye(c)[None], degenerate=True)


def _subsample(x: np.ndarray, limit: int, rng: np.random.Generator) -> np.ndarray:
    if len(x) <= limit:
        return x
    return x[np.sort(rng.choice(len(x), size=limit, replace=False))]


def fit_color_model(image, mask, params: SegmParams = SegmParams(), rng: np.random.Generator | None = None,
                    previous: ColorModel | None = None) -> ColorModel:
    """Foreground and background mixtures fitted on the pixels of each label.

    ``previous`` warm-starts EM instead of re-running k-means. A label with no
    pixels gets a single broad component centred on the image mean, flagged
    degenerate.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    img = as_channels(image)
    m = as_mask(mask).astype(bool)
    mixtures = []
    for label, prev in ((True, previous and previous.foreground), (False, previous and previous.background)):
        pix = img[m == label]
        if len(pix) == 0:
            mixtures.append(_degenerate_mixture(img))
            continue
        pix = _subsample(pix, params.gmm_max_samples, rng)
        init = prev if prev is not None and not prev.degenerate else None
        gmm, _ = fit_gmm(pix, params.gmm_components, rng, eps=params.gmm_eps, init=init)
        mixtures.append(gmm)
    return ColorModel(*mixtures)


def color_costs(image, model: ColorModel) -> tuple[np.ndarray, np.ndarray]:
    return model.pixel_costs(image)


def color_cost(image, mask, model: ColorModel) -> float:
    fg, bg = model.pixel_costs(image)
    m = as_mask(mask).astype(bool)
    return float(fg[m].sum() + bg[~m].sum())


# ---------------------------------------------------------------------------
# contour term


def contour_distance_cost(t, params: SegmParams = SegmParams()):
    """Exponentially growing penalty for labelling a pixel ``t`` px away from that label's region."""
    return np.exp(np.minimum(np.asarray(t, dtype=np.float64), params.contour_cap) / params.contour_tau) - 1.0


@dataclass
class ContourCostMaps:
    F: np.ndarray  # cost of the foreground label
    B: np.ndarray  # cost of the background label
    degenerate: bool = False


def distance_to_label(mask: np.ndarray, label: int) -> np.ndarray:
    """Euclidean distance from each pixel to the nearest pixel carrying ``label`` (inf if none)."""
    target = mask == label
    if not target.any():
        return np.full(mask.shape, np.inf)
    return distance_transform_edt(~target)


def build_contour_maps(prev_mask, params: SegmParams = SegmParams()) -> ContourCostMaps:
    m = as_mask(prev_mask)
    t_f = distance_to_label(m, 1)
    t_b = distance_to_label(m, 0)
    degenerate = bool(np.isinf(t_f).any() or np.isinf(t_b).any())
    return ContourCostMaps(contour_distance_cost(t_f, params), contour_distance_cost(t_b, params), degenerate)


def contour_unaries(maps_own: ContourCostMaps, maps_other: ContourCostMaps, disparities: np.ndarray, view: int,
                    params: SegmParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel contour costs ``(cost if foreground, cost if background)``."""
    cost_f = maps_own.F.copy()
    cost_b = maps_own.B.copy()
    if params.use_cross_contour and params.lambda_m > 0:
        cost_f += params.lambda_m * sample_shifted(maps_other.F, disparities, view)
        cost_b += params.lambda_m * sample_shifted(maps_other.B, disparities, view)
    return params.lambda_c * cost_f, params.lambda_c * cost_b


def contour_cost(mask, maps_own: ContourCostMaps, maps_other: ContourCostMaps, disparities: np.ndarray, view: int,
                 params: SegmParams = SegmParams()) -> float:
    m = as_mask(mask).astype(bool)
    cf, cb = contour_unaries(maps_own, maps_other, disparities, view, params)
    return float(cf[m].sum() + cb[~m].sum())


# ---------------------------------------------------------------------------
# spatial smoothness


def segm_edge_weights(grads_own, other_image, disparities: np.ndarray, view: int,
                      params: SegmParams) -> tuple[np.ndarray, np.ndarray]:
    """Discontinuity penalties for horizontal (``H x W-1``) and vertical (``H-1 x W``) edges.

    The cross-view part compares the other image at both pixels' epipolar
    targets and is dropped when either target falls outside the image.
    """
    own_h = gradient_scale(grads_own.horizontal, params.g)
    own_v = gradient_scale(grads_own.vertical, params.g)
    if params.lambda_m > 0:
        other = as_channels(other_image)
        colours = sample_shifted(other, disparities, view)
        _, valid = shifted_columns(disparities, view)
        cross_h = gradient_scale(channel_max_diff(colours[:, :-1], colours[:, 1:]), params.g)
        cross_h = np.where(valid[:, :-1] & valid[:, 1:], cross_h, 0.0)
        cross_v = gradient_scale(channel_max_diff(colours[:-1, :], colours[1:, :]), params.g)
        cross_v = np.where(valid[:-1, :] & valid[1:, :], cross_v, 0.0)
        own_h = own_h + params.lambda_m * cross_h
        own_v = own_v + params.lambda_m * cross_v
    return params.lambda_s2 * own_h, params.lambda_s2 * own_v


def segm_smoothness_cost(mask, grads_own, other_image, disparities: np.ndarray, view: int,
                         params: SegmParams = SegmParams()) -> float:
    m = as_mask(mask)
    wh, wv = segm_edge_weights(grads_own, other_image, disparities, view, params)
    return float((wh * (m[:, :-1] != m[:, 1:])).sum() + (wv * (m[:-1, :] != m[1:, :])).sum())


# ---------------------------------------------------------------------------
# temporal term


@dataclass
class TemporalCliqueSet:
    """``anchors[c, l] = (y, x)`` of clique ``c`` in layer ``l`` (layer 0 is the newest)."""

    anchors: np.ndarray = field(default_factory=lambda: np.zeros((0, 1, 2), dtype=np.int64))

    @property
    def n_layers(self) -> int:
        return self.anchors.shape[1]

    def __len__(self) -> int:
        return self.anchors.shape[0]

    def reversed(self) -> "TemporalCliqueSet":
        return TemporalCliqueSet(self.anchors[:, ::-1].copy())


def temporal_gradient_scale(color_a, color_b, g: float = 30.0):
    return gradient_scale(channel_max_diff(color_a, color_b), g)


def temporal_weights(cliques: TemporalCliqueSet, images: list, params: SegmParams) -> np.ndarray:
    """``lambda_s2 * G^t`` per clique and consecutive-layer link (``n x L-1``)."""
    n, layers = len(cliques), cliques.n_layers
    out = np.zeros((n, max(layers - 1, 0)))
    for l in range(layers - 1):
        a = as_channels(images[l])[cliques.anchors[:, l, 0], cliques.anchors[:, l, 1]]
        b = as_channels(images[l + 1])[cliques.anchors[:, l + 1, 0], cliques.anchors[:, l + 1, 1]]
        out[:, l] = params.lambda_s2 * temporal_gradient_scale(a, b, params.g)
    return out


def temporal_cost(masks: list, cliques: TemporalCliqueSet, weights: np.ndarray) -> float:
    """Sum of link weights over cliques whose consecutive-layer labels disagree."""
    total = 0.0
    for l in range(min(cliques.n_layers, len(masks)) - 1):
        a = np.asarray(masks[l])[cliques.anchors[:, l, 0], cliques.anchors[:, l, 1]]
        b = np.asarray(masks[l + 1])[cliques.anchors[:, l + 1, 0], cliques.anchors[:, l + 1, 1]]
        total += float((weights[:, l] * (a != b)).sum())
    return total


# ---------------------------------------------------------------------------
# total energy


@dataclass(frozen=True)
class SegmEnergyBreakdown:
    color: float
    contour: float
    smoothness: float
    temporal: float

    @property
    def total(self) -> float:
        return self.color + self.contour + self.smoothness + self.temporal

    def as_dict(self) -> dict:
        return {"color": self.color, "contour": self.contour, "smoothness": self.smoothness,
                "temporal": self.temporal, "total": self.total}


@dataclass
class SegmLayerTerms:
    """Cached unaries and edge weights of one view in one temporal layer."""

    cost_fg: np.ndarray
    cost_bg: np.ndarray
    edge_h: np.ndarray
    edge_v: np.ndarray


def layer_terms(image, grads, color_model: ColorModel | None, maps_own: ContourCostMaps,
                maps_other: ContourCostMaps, other_image, disparities: np.ndarray, view: int,
                params: SegmParams) -> SegmLayerTerms:
    h, w = disparities.shape
    cost_fg = np.zeros((h, w))
    cost_bg = np.zeros((h, w))
    if params.use_color and color_model is not None:
        cf, cb = color_model.pixel_costs(image)
        cost_fg += cf
        cost_bg += cb
    if params.use_contour:
        cf, cb = contour_unaries(maps_own, maps_other, disparities, view, params)
        cost_fg += cf
        cost_bg += cb
    eh, ev = segm_edge_weights(grads, other_image, disparities, view, params)
    return SegmLayerTerms(cost_fg, cost_bg, eh, ev)


def energy_from_terms(masks: list, terms: list[SegmLayerTerms], cliques: TemporalCliqueSet | None,
                      t_weights: np.ndarray | None) -> float:
    total = 0.0
    for m, t in zip(masks, terms):
        mb = np.asarray(m).astype(bool)
        total += float(t.cost_fg[mb].sum() + t.cost_bg[~mb].sum())
        total += float((t.edge_h * (m[:, :-1] != m[:, 1:])).sum() + (t.edge_v * (m[:-1, :] != m[1:, :])).sum())
    if cliques is not None and t_weights is not None and len(cliques):
        total += temporal_cost(masks, cliques, t_weights)
    return total


def total_segm_energy(masks: list, images: list, grads: list, color_models: list, maps_own: list, maps_other: list,
                      other_images: list, disparities: list, view: int, cliques: TemporalCliqueSet | None,
                      params: SegmParams = SegmParams()) -> SegmEnergyBreakdown:
    """Segmentation energy of one view summed over its temporal layers (lists are per layer)."""
    color = contour = smooth = 0.0
    for l, m in enumerate(masks):
        if params.use_color and color_models[l] is not None:
            color += color_cost(images[l], m, color_models[l])
        if params.use_contour:
            contour += contour_cost(m, maps_own[l], maps_other[l], disparities[l], view, params)
        smooth += segm_smoothness_cost(m, grads[l], other_images[l], disparities[l], view, params)
    temporal = 0.0
    if params.use_temporal and cliques is not None and len(cliques) and len(masks) > 1:
        temporal = temporal_cost(masks, cliques, temporal_weights(cliques, images, params))
    return SegmEnergyBreakdown(color, contour, smooth, temporal)
