"""Alternating minimization of the stereo and segmentation energies over a frame pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import maxflow
import numpy as np

from .core import (
    DisparityLabeling,
    FramePair,
    GradientMap,
    LabelSpaces,
    MutualSegError,
    as_mask,
    compute_gradient_map,
    sample_shifted,
    shift_sign,
)
from .descriptors import (
    APPEARANCE,
    SHAPE,
    AffinityCostVolume,
    SaliencyMap,
    build_affinity_pair,
    build_saliency_map,
    compute_self_similarity_field,
    compute_shape_context_field,
)
from .flow import ZeroFlowProvider, chain_and_round, stride_anchors, warp_labels
from .segm_model import (
    ColorModel,
    ContourCostMaps,
    SegmLayerTerms,
    SegmEnergyBreakdown,
    SegmParams,
    TemporalCliqueSet,
    build_contour_maps,
    energy_from_terms,
    fit_color_model,
    layer_terms,
    temporal_weights,
    total_segm_energy,
)
from .stereo_model import (
    StereoParams,
    charge_term,
    edge_scales,
    gather_costs,
    pairwise_disparity_cost,
    refund_term,
    total_stereo_energy,
)

log = logging.getLogger(__name__)

_RIGHT = np.array([[0, 0, 0], [0, 0, 1], [0, 0, 0]])
_DOWN = np.array([[0, 0, 0], [0, 0, 0], [0, 1, 0]])


@dataclass(frozen=True)
class SolverConfig:
    max_disparity_passes: int = 3
    max_segmentation_moves: int = 50
    accept_tol: float = 1e-9
    flow_view: int = 0
    seed: int = 0
    record_energies: bool = False

    def __post_init__(self):
        if self.max_disparity_passes < 1 or self.max_segmentation_moves < 1:
            raise ValueError("solver bounds must be positive")
        if self.flow_view not in (0, 1):
            raise ValueError("flow_view must be 0 or 1")


# ---------------------------------------------------------------------------
# disparity moves


@dataclass
class StereoPriors:
    """Per-view stereo data: cue volumes, saliencies and their combined unary costs."""

    volumes: dict = field(default_factory=dict)
    saliencies: dict = field(default_factory=dict)
    data_cost: np.ndarray | None = None  # (d_max+1) x H x W
    scales: tuple[np.ndarray, np.ndarray] | None = None

    def combine(self, shape: tuple[int, int], n_disp: int) -> None:
        # float64, so move estimates use the very products the energy sums
        cost = np.zeros((n_disp,) + shape, np.float64)
        for cue, vol in self.volumes.items():
            weights = np.asarray(self.saliencies[cue].weights, np.float64)
            for d in range(n_disp):
                cost[d] += vol.costs[:, :, d].astype(np.float64) * weights
        self.data_cost = cost


def _disparity_edge_tables(d: np.ndarray, alpha: int, scale: np.ndarray, axis: int, params: StereoParams):
    if axis == 1:
        dp, dq = d[:, :-1], d[:, 1:]
    else:
        dp, dq = d[:-1, :], d[1:, :]
    a = pairwise_disparity_cost(dp, dq, scale, params)
    b = pairwise_disparity_cost(dp, alpha, scale, params)
    c = pairwise_disparity_cost(alpha, dq, scale, params)
    # E(1,1) = 0; lower E(0,0) where needed to keep the binary term submodular
    a = np.minimum(a, b + c)
    return a, b, c


def _expansion_unaries(labeling: DisparityLabeling, alpha: int, data_cost: np.ndarray, params: StereoParams):
    d = labeling.labels
    h, w = d.shape
    moving = d != alpha
    cur = np.take_along_axis(data_cost, d[None], axis=0)[0]
    u1 = data_cost[alpha] - cur
    if params.use_uniqueness and params.lambda_u > 0:
        s = shift_sign(labeling.view)
        cols = np.arange(w)[None, :]
        rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
        xs_old = cols + s * d
        ok_old = (xs_old >= 0) & (xs_old < w)
        refund = np.zeros((h, w))
        refund[ok_old] = refund_term(labeling.counts[rows[ok_old], xs_old[ok_old]], params.w)
        xs_new = np.broadcast_to(cols + s * alpha, (h, w))
        ok_new = (xs_new >= 0) & (xs_new < w)
        charge = np.zeros((h, w))
        charge[ok_new] = charge_term(labeling.counts[rows[ok_new], xs_new[ok_new]], params.w)
        u1 += params.lambda_u * (charge - refund)
    u1[~moving] = 0.0
    return u1, moving


def fuse_uniform_disparity(labeling: DisparityLabeling, alpha: int, priors: StereoPriors, params: StereoParams,
                           tol: float = 1e-9) -> tuple[DisparityLabeling, float]:
    """Expansion move towards the uniform proposal ``alpha``.

    Returns the new labeling and the estimated energy change. The estimate
    bounds the realized change from above; moves whose estimate is not below
    ``-tol`` are rejected and the input labeling comes back unchanged.
    """
    d = labeling.labels
    h, w = d.shape
    if priors.data_cost is None or priors.data_cost.shape != (labeling.d_max + 1, h, w):
        raise MutualSegError("stereo priors do not match the labeling size")
    if not 0 <= alpha <= labeling.d_max:
        raise ValueError(f"proposal {alpha} outside the disparity label space")
    u1, moving = _expansion_unaries(labeling, alpha, priors.data_cost, params)
    if not moving.any():
        return labeling, 0.0
    sh, sv = priors.scales
    ah, bh, ch = _disparity_edge_tables(d, alpha, sh, 1, params)
    av, bv, cv = _disparity_edge_tables(d, alpha, sv, 0, params)
    u1[:, :-1] += ch - ah
    u1[:, 1:] -= ch
    u1[:-1, :] += cv - av
    u1[1:, :] -= cv
    wh = np.zeros((h, w))
    wh[:, :-1] = bh + ch - ah
    wv = np.zeros((h, w))
    wv[:-1, :] = bv + cv - av

    g = maxflow.Graph[float]()
    ids = g.add_grid_nodes((h, w))
    g.add_grid_tedges(ids, np.maximum(u1, 0), np.maximum(-u1, 0))
    g.add_grid_edges(ids, weights=wh, structure=_RIGHT, symmetric=False)
    g.add_grid_edges(ids, weights=wv, structure=_DOWN, symmetric=False)
    g.maxflow()
    x = g.get_grid_segments(ids) & moving
    if not x.any():
        return labeling, 0.0
    xf = x.astype(np.float64)
    delta = float((u1 * xf).sum()
                  + (wh[:, :-1] * (1 - xf[:, :-1]) * xf[:, 1:]).sum()
                  + (wv[:-1, :] * (1 - xf[:-1, :]) * xf[1:, :]).sum())
    if delta >= -tol:
        return labeling, 0.0
    new = labeling.copy()
    new.set_labels(np.where(x, alpha, d))
    return new, delta


def winner_take_all(priors: StereoPriors) -> np.ndarray:
    return np.argmin(priors.data_cost, axis=0).astype(np.int64)


# ---------------------------------------------------------------------------
# segmentation moves


def fuse_segmentation(masks: list[np.ndarray], beta: int, terms: list[SegmLayerTerms],
                      cliques: TemporalCliqueSet | None = None, t_weights: np.ndarray | None = None,
                      tol: float = 1e-9) -> tuple[list[np.ndarray], float]:
    """Optimal move letting any pixel of any layer switch to label ``beta``.

    Pixels already labelled ``beta`` stay put. The binary problem is
    submodular (all pairwise weights are non-negative XOR penalties), so
    one min-cut solves it exactly.
    """
    if beta not in (0, 1):
        raise ValueError("beta must be 0 or 1")
    masks = [as_mask(m) for m in masks]
    n_layers = len(masks)
    h, w = masks[0].shape
    cur = np.stack(masks)
    cost1 = np.stack([t.cost_fg for t in terms[:n_layers]])
    cost0 = np.stack([t.cost_bg for t in terms[:n_layers]])
    diff = cost1 - cost0
    fixed = cur == beta
    src = np.maximum(diff, 0)  # paid when the node takes label 1
    snk = np.maximum(-diff, 0)  # paid when it takes label 0
    big = float(np.abs(diff).sum() + sum(t.edge_h.sum() + t.edge_v.sum() for t in terms)) + 1.0
    if t_weights is not None:
        big += float(t_weights.sum())
    if beta == 1:
        snk = np.where(fixed, snk + big, snk)
    else:
        src = np.where(fixed, src + big, src)

    g = maxflow.Graph[float]()
    ids = g.add_grid_nodes((n_layers, h, w))
    g.add_grid_tedges(ids, src, snk)
    for l, t in enumerate(terms[:n_layers]):
        wh = np.zeros((h, w))
        wh[:, :-1] = t.edge_h
        wv = np.zeros((h, w))
        wv[:-1, :] = t.edge_v
        g.add_grid_edges(ids[l], weights=wh, structure=_RIGHT, symmetric=True)
        g.add_grid_edges(ids[l], weights=wv, structure=_DOWN, symmetric=True)
    if cliques is not None and t_weights is not None and len(cliques) and n_layers > 1:
        for l in range(min(cliques.n_layers, n_layers) - 1):
            a = ids[l][cliques.anchors[:, l, 0], cliques.anchors[:, l, 1]]
            b = ids[l + 1][cliques.anchors[:, l + 1, 0], cliques.anchors[:, l + 1, 1]]
            wt = t_weights[:, l].astype(np.float64)
            g.add_edges(a.astype(np.int32), b.astype(np.int32), wt, wt)
    g.maxflow()
    new = g.get_grid_segments(ids).astype(np.uint8)
    new = np.where(fixed, cur, new).astype(np.uint8)
    new_masks = [new[l] for l in range(n_layers)]
    if np.array_equal(new, cur):
        return masks, 0.0
    before = energy_from_terms(masks, terms, cliques, t_weights)
    after = energy_from_terms(new_masks, terms, cliques, t_weights)
    delta = after - before
    if delta >= -tol:
        return masks, 0.0
    return new_masks, delta


# ---------------------------------------------------------------------------
# pipeline state


@dataclass
class Layer:
    pair: FramePair
    masks: list[np.ndarray]
    disparities: list[DisparityLabeling]
    grads: list[GradientMap]
    color_models: list[ColorModel | None] = field(default_factory=lambda: [None, None])
    contour_maps: list[ContourCostMaps | None] = field(default_factory=lambda: [None, None])
    flow_to_older: np.ndarray | None = None
    emitted: bool = False
    degenerate: bool = False
    # bumped whenever anything the segmentation terms depend on changes
    version: int = 0
    _terms: dict = field(default_factory=dict, repr=False)

    def touch(self) -> None:
        self.version += 1

    @property
    def frame_index(self) -> int:
        return self.pair.frame_index


@dataclass
class PipelineState:
    depth: int
    layers: list[Layer] = field(default_factory=list)
    cliques: TemporalCliqueSet | None = None
    stereo: list[StereoPriors] = field(default_factory=lambda: [StereoPriors(), StereoPriors()])
    shape_stale: bool = True

    @property
    def newest(self) -> Layer:
        return self.layers[0]


@dataclass
class MinimizeStats:
    disparity_passes: int = 0
    disparity_moves_accepted: int = 0
    segmentation_moves: int = 0
    segmentation_moves_accepted: int = 0
    converged: bool = False
    bound_hit: bool = False
    degenerate: bool = False
    first_pass_segmentation_accepted: int = 0
    # (kind, view, energy before, energy after) for each accepted move when recorded
    trace: list = field(default_factory=list)


@dataclass
class FrameOutput:
    frame_index: int
    masks: list[np.ndarray]
    disparities: list[np.ndarray]


@dataclass
class FrameResult:
    realtime: FrameOutput
    deferred: list[FrameOutput]
    stats: MinimizeStats
    stereo_energy: list[dict]
    segm_energy: list[dict]


class MutualSegmenter:
    """Online engine: feed frame pairs in order, collect real-time and deferred outputs."""

    def __init__(self, d_max: int, stereo_params: StereoParams = StereoParams(),
                 segm_params: SegmParams = SegmParams(), config: SolverConfig = SolverConfig(),
                 flow_provider=None):
        self.spaces = LabelSpaces(d_max)
        self.stereo_params = stereo_params
        self.segm_params = segm_params
        self.config = config
        self.flow_provider = flow_provider if flow_provider is not None else ZeroFlowProvider()
        self.state = PipelineState(depth=segm_params.layers)
        self._shape: tuple[int, int] | None = None

    # -- stream handling ----------------------------------------------------

    def advance(self, pair: FramePair, init_masks) -> FrameResult:
        """Push a new frame pair, optimize, and return its outputs.

        ``init_masks`` holds one initial mask (or None) per view.
        """
        if self._shape is None:
            self._shape = pair.shape
            self.spaces.check_width(pair.width)
        elif pair.shape != self._shape:
            raise MutualSegError(
                f"frame {pair.frame_index} is {pair.width}x{pair.height}, "
                f"expected {self._shape[1]}x{self._shape[0]}"
            )
        state = self.state
        prev = state.layers[0] if state.layers else None
        flow = None
        if prev is not None:
            fv = self.config.flow_view
            flow = self.flow_provider(pair.images[fv], prev.pair.images[fv], pair.frame_index)
        masks = self._initial_masks(init_masks, pair)
        layer = Layer(
            pair=pair,
            masks=masks,
            disparities=[DisparityLabeling.uniform(pair.shape, 0, k, self.spaces.d_max) for k in (0, 1)],
            grads=[compute_gradient_map(im) for im in pair.images],
            flow_to_older=flow,
        )
        state.layers.insert(0, layer)
        del state.layers[state.depth:]
        self._rebuild_cliques()
        self._init_stereo(prev, flow)
        stats = alternate_minimize(self, masks_given=[m is not None for m in init_masks])
        result = self._result(stats)
        if len(state.layers) == state.depth:
            oldest = state.layers[-1]
            if not oldest.emitted:
                result.deferred.append(self._output(oldest))
                oldest.emitted = True
        return result

    def finish(self) -> list[FrameOutput]:
        """Flush the layers whose deferred outputs are still pending (oldest first)."""
        out = []
        for layer in reversed(self.state.layers):
            if not layer.emitted:
                out.append(self._output(layer))
                layer.emitted = True
        return out

    def _initial_masks(self, init_masks, pair: FramePair) -> list[np.ndarray | None]:
        if len(init_masks) != 2:
            raise ValueError("one initial mask (or None) per view is required")
        out = []
        for m in init_masks:
            if m is None:
                out.append(None)
                continue
            m = as_mask(m)
            if m.shape != pair.shape:
                raise MutualSegError(f"initial mask is {m.shape[1]}x{m.shape[0]}, frame is {pair.width}x{pair.height}")
            out.append(m)
        return out

    @staticmethod
    def _output(layer: Layer) -> FrameOutput:
        return FrameOutput(layer.frame_index, [m.copy() for m in layer.masks],
                           [d.labels.copy() for d in layer.disparities])

    def _result(self, stats: MinimizeStats) -> FrameResult:
        layer = self.state.newest
        return FrameResult(self._output(layer), [], stats,
                           [self.stereo_energy(k).as_dict() for k in (0, 1)],
                           [self.segm_energy(k).as_dict() for k in (0, 1)])

    # -- priors ---------------------------------------------------------------

    def _rebuild_cliques(self) -> None:
        state = self.state
        if len(state.layers) < 2 or not self.segm_params.use_temporal:
            state.cliques = None
            return
        shape = state.layers[0].pair.shape
        anchors = stride_anchors(shape, self.segm_params.temporal_stride)
        flows = [state.layers[l].flow_to_older for l in range(len(state.layers) - 1)]
        state.cliques = TemporalCliqueSet(chain_and_round(anchors, flows, shape))

    def _init_stereo(self, prev: Layer | None, flow) -> None:
        layer = self.state.newest
        sp = self.stereo_params
        priors = self.state.stereo
        for k in (0, 1):
            priors[k] = StereoPriors(scales=edge_scales(layer.grads[k], sp.g))
        if sp.use_appearance:
            fields = [compute_self_similarity_field(im) for im in layer.pair.images]
            vols = build_affinity_pair(fields[0], fields[1], self.spaces.d_max)
            for k in (0, 1):
                sal = build_saliency_map(vols[k], fields[k], APPEARANCE)
                if not sp.use_saliency:
                    sal = SaliencyMap(np.ones_like(sal.weights), APPEARANCE)
                priors[k].volumes[APPEARANCE] = vols[k]
                priors[k].saliencies[APPEARANCE] = sal
        self.state.shape_stale = True
        if prev is not None and flow is not None:
            for k in (0, 1):
                layer.disparities[k].set_labels(warp_labels(prev.disparities[k].labels, flow))
            layer.touch()
        else:
            self._combine_stereo(include_shape=False)
            for k in (0, 1):
                layer.disparities[k].set_labels(winner_take_all(priors[k]))
            layer.touch()

    def refresh_shape(self) -> None:
        """Rebuild shape-context volumes and saliencies from the newest provisional masks."""
        sp = self.stereo_params
        layer = self.state.newest
        priors = self.state.stereo
        if sp.use_shape and all(m is not None for m in layer.masks):
            fields = [compute_shape_context_field(m) for m in layer.masks]
            vols = build_affinity_pair(fields[0], fields[1], self.spaces.d_max)
            for k in (0, 1):
                sal = build_saliency_map(vols[k], fields[k], SHAPE, layer.masks[k])
                if not sp.use_saliency:
                    sal = SaliencyMap(as_mask(layer.masks[k]).astype(np.float64), SHAPE)
                priors[k].volumes[SHAPE] = vols[k]
                priors[k].saliencies[SHAPE] = sal
        self._combine_stereo(include_shape=True)
        self.state.shape_stale = False

    def _combine_stereo(self, include_shape: bool) -> None:
        shape = self.state.newest.pair.shape
        for pr in self.state.stereo:
            if not include_shape:
                pr.volumes.pop(SHAPE, None)
                pr.saliencies.pop(SHAPE, None)
            pr.combine(shape, self.spaces.n_disparities)

    def refit_layer(self, layer: Layer, view: int, rng: np.random.Generator, warm: bool = True) -> None:
        m = layer.masks[view]
        prev = layer.color_models[view] if warm else None
        if self.segm_params.use_color:
            layer.color_models[view] = fit_color_model(layer.pair.images[view], m, self.segm_params, rng, prev)
        layer.contour_maps[view] = build_contour_maps(m, self.segm_params)
        layer.touch()

    def segm_terms(self, view: int) -> list[SegmLayerTerms]:
        other = 1 - view
        out = []
        for layer in self.state.layers:
            cached = layer._terms.get(view)
            if cached is None or cached[0] != layer.version:
                terms = layer_terms(
                    layer.pair.images[view], layer.grads[view], layer.color_models[view],
                    layer.contour_maps[view], layer.contour_maps[other], layer.pair.images[other],
                    layer.disparities[view].labels, view, self.segm_params)
                cached = layer._terms[view] = (layer.version, terms)
            out.append(cached[1])
        return out

    def temporal_weights(self, view: int) -> np.ndarray | None:
        cl = self.state.cliques
        if cl is None or not len(cl):
            return None
        images = [layer.pair.images[view] for layer in self.state.layers]
        return temporal_weights(cl, images, self.segm_params)

    # -- energies -------------------------------------------------------------

    def stereo_energy(self, view: int):
        pr = self.state.stereo[view]
        return total_stereo_energy(self.state.newest.disparities[view], pr.volumes, pr.saliencies,
                                   self.state.newest.grads[view], self.stereo_params)

    def segm_energy(self, view: int):
        layers = self.state.layers
        other = 1 - view
        if any(layer.masks[view] is None or layer.contour_maps[view] is None for layer in layers):
            return SegmEnergyBreakdown(0.0, 0.0, 0.0, 0.0)
        return total_segm_energy(
            [layer.masks[view] for layer in layers],
            [layer.pair.images[view] for layer in layers],
            [layer.grads[view] for layer in layers],
            [layer.color_models[view] if self.segm_params.use_color else None for layer in layers],
            [layer.contour_maps[view] for layer in layers],
            [layer.contour_maps[other] for layer in layers],
            [layer.pair.images[other] for layer in layers],
            [layer.disparities[view].labels for layer in layers],
            view, self.state.cliques, self.segm_params,
        )


def transfer_mask(mask: np.ndarray, disparities: np.ndarray, view: int) -> np.ndarray:
    """Carry a mask of the other view onto ``view`` through its disparity labels."""
    return (sample_shifted(mask.astype(np.float64), disparities, view) > 0.5).astype(np.uint8)


def alternate_minimize(engine: MutualSegmenter, masks_given=(True, True)) -> MinimizeStats:
    """Interleave disparity expansion sweeps with segmentation fusions on the newest frame.

    Each pass runs one expansion sweep over every disparity label in both
    views, then segmentation fusions until a full round accepts nothing.
    Stops after a pass whose segmentation round accepted no move, or at the
    configured bounds (``bound_hit``).
    """
    cfg = engine.config
    state = engine.state
    layer = state.newest
    stats = MinimizeStats()
    rng = np.random.default_rng([cfg.seed, layer.frame_index])
    sp, segp = engine.stereo_params, engine.segm_params

    if all(m is None or not m.any() for m in layer.masks):
        # no foreground evidence in either view
        stats.degenerate = True
        layer.degenerate = True
        layer.masks = [np.zeros(layer.pair.shape, np.uint8) for _ in (0, 1)]
        for k in (0, 1):
            layer.contour_maps[k] = build_contour_maps(layer.masks[k], segp)
        layer.touch()
        engine.refresh_shape()
        _disparity_sweep(engine, stats)
        stats.converged = True
        return stats

    if any(m is None or not m.any() for m in layer.masks):
        missing = 0 if (layer.masks[0] is None or not layer.masks[0].any()) else 1
        layer.masks[missing] = transfer_mask(layer.masks[1 - missing], layer.disparities[missing].labels, missing)

    for lay in state.layers:
        for k in (0, 1):
            if lay.contour_maps[k] is None or (segp.use_color and lay.color_models[k] is None):
                engine.refit_layer(lay, k, rng, warm=False)

    t_weights = [engine.temporal_weights(k) for k in (0, 1)]
    for p in range(cfg.max_disparity_passes):
        if state.shape_stale:
            engine.refresh_shape()
        _disparity_sweep(engine, stats)
        accepted = 0
        while stats.segmentation_moves < cfg.max_segmentation_moves:
            round_accepted = 0
            for beta in (1, 0):
                for k in (0, 1):
                    if stats.segmentation_moves >= cfg.max_segmentation_moves:
                        break
                    stats.segmentation_moves += 1
                    if _segmentation_move(engine, k, beta, t_weights[k], rng, stats):
                        round_accepted += 1
            accepted += round_accepted
            if round_accepted == 0:
                break
        if p == 0:
            stats.first_pass_segmentation_accepted = accepted
        if accepted == 0:
            stats.converged = True
            break
        # a round cut short by the move bound is not proof of convergence
        if stats.segmentation_moves >= cfg.max_segmentation_moves:
            break
    stats.bound_hit = not stats.converged
    if stats.bound_hit:
        log.info("frame %d: solver bounds hit before convergence", layer.frame_index)
    if state.shape_stale:
        engine.refresh_shape()
    return stats


def _disparity_sweep(engine: MutualSegmenter, stats: MinimizeStats) -> None:
    cfg = engine.config
    layer = engine.state.newest
    stats.disparity_passes += 1
    for k in (0, 1):
        pr = engine.state.stereo[k]
        for alpha in engine.spaces.disparities:
            before = engine.stereo_energy(k).total if cfg.record_energies else None
            new, delta = fuse_uniform_disparity(layer.disparities[k], alpha, pr, engine.stereo_params,
                                                cfg.accept_tol)
            if delta < 0:
                layer.disparities[k] = new
                layer.touch()
                stats.disparity_moves_accepted += 1
                if cfg.record_energies:
                    stats.trace.append(("disparity", k, before, engine.stereo_energy(k).total, delta))


def _segmentation_move(engine: MutualSegmenter, view: int, beta: int, t_weights, rng, stats: MinimizeStats) -> bool:
    cfg = engine.config
    state = engine.state
    terms = engine.segm_terms(view)
    masks = [layer.masks[view] for layer in state.layers]
    before = engine.segm_energy(view).total if cfg.record_energies else None
    new_masks, delta = fuse_segmentation(masks, beta, terms, state.cliques, t_weights, cfg.accept_tol)
    if delta >= 0:
        return False
    for layer, m in zip(state.layers, new_masks):
        layer.masks[view] = m
    if cfg.record_energies:
        # evaluated under the priors the move was optimized against
        stats.trace.append(("segmentation", view, before, engine.segm_energy(view).total, delta))
    for layer, old, m in zip(state.layers, masks, new_masks):
        if not np.array_equal(old, m):
            engine.refit_layer(layer, view, rng)
    state.shape_stale = True
    stats.segmentation_moves_accepted += 1
    return True
