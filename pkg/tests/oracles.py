"""Slow, loop-based reference implementations used to check the vectorized code."""

from __future__ import annotations

import itertools
import math

import numpy as np


def shift(x, d, view):
    return x - d if view == 0 else x + d


def pixel(img, y, x):
    v = np.asarray(img, dtype=np.float64)[y, x]
    return np.atleast_1d(v)


def grad_scale(diff, g):
    return max(math.exp(1.0 - diff / g) - 0.5, 0.0)


def edge_diff(img, p, q):
    (y0, x0), (y1, x1) = p, q
    return float(np.max(np.abs(pixel(img, y0, x0) - pixel(img, y1, x1))))


def neighbours(h, w):
    for y in range(h):
        for x in range(w):
            if x + 1 < w:
                yield (y, x), (y, x + 1)
            if y + 1 < h:
                yield (y, x), (y + 1, x)


def uniqueness(n, w):
    return sum(w * k / (w + k - 1) for k in range(1, n))


def counts(labels, view):
    h, w = labels.shape
    out = np.zeros((h, w), int)
    for y in range(h):
        for x in range(w):
            xs = shift(x, int(labels[y, x]), view)
            if 0 <= xs < w:
                out[y, xs] += 1
    return out


def stereo_energy(labels, view, image, cue_costs, cue_weights, lambda_u, lambda_s1, w, g, trunc,
                  use_uniqueness=True):
    """Data + uniqueness + smoothness, written out pixel by pixel."""
    h, wd = labels.shape
    total = 0.0
    for costs, weights in zip(cue_costs, cue_weights):
        for y in range(h):
            for x in range(wd):
                d = int(labels[y, x])
                if 0 <= shift(x, d, view) < wd:
                    total += float(costs[y, x, d]) * float(weights[y, x])
    if use_uniqueness:
        n = counts(labels, view)
        total += lambda_u * sum(uniqueness(int(n[y, x]), w) for y in range(h) for x in range(wd))
    for p, q in neighbours(h, wd):
        dd = min(abs(int(labels[p]) - int(labels[q])), trunc)
        total += lambda_s1 * dd * dd * grad_scale(edge_diff(image, p, q), g)
    return total


def brute_distance(mask, label):
    h, w = mask.shape
    pts = [(y, x) for y in range(h) for x in range(w) if mask[y, x] == label]
    out = np.full((h, w), np.inf)
    for y in range(h):
        for x in range(w):
            for py, px in pts:
                out[y, x] = min(out[y, x], math.hypot(y - py, x - px))
    return out


def contour_f(t, tau=4.0, cap=32.0):
    return math.exp(min(t, cap) / tau) - 1.0


def gaussian_log_density(x, weights, means, covs):
    """Mixture log density using explicit inverse and determinant."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    c = len(x)
    total = 0.0
    for wk, mu, cov in zip(weights, means, covs):
        diff = x - mu
        maha = float(diff @ np.linalg.inv(cov) @ diff)
        total += wk * math.exp(-0.5 * maha) / math.sqrt((2 * math.pi) ** c * np.linalg.det(cov))
    return math.log(max(total, 1e-30))


def segm_energy(masks, images, others, disps, view, color, prev_own, prev_other, cliques, params):
    """Full segmentation energy of one view over its layers.

    ``color[l]`` is ``(fg_mixture, bg_mixture)`` as (weights, means, covs)
    tuples or None; ``prev_own``/``prev_other`` are the previous masks the
    contour maps come from; ``cliques`` is a list of per-layer (y, x) anchors.
    """
    lc, ls2, lm, g = params["lambda_c"], params["lambda_s2"], params["lambda_m"], params["g"]
    total = 0.0
    for l, m in enumerate(masks):
        h, w = m.shape
        dist_own = {lab: brute_distance(prev_own[l], lab) for lab in (0, 1)}
        dist_oth = {lab: brute_distance(prev_other[l], lab) for lab in (0, 1)}
        for y in range(h):
            for x in range(w):
                s = int(m[y, x])
                if color[l] is not None:
                    total += -gaussian_log_density(pixel(images[l], y, x), *color[l][0 if s else 1])
                c = contour_f(dist_own[s][y, x])
                xs = shift(x, int(disps[l][y, x]), view)
                if 0 <= xs < w and params.get("cross_contour", True):
                    c += lm * contour_f(dist_oth[s][y, xs])
                total += lc * c
        for p, q in neighbours(h, w):
            if m[p] == m[q]:
                continue
            wgt = grad_scale(edge_diff(images[l], p, q), g)
            xp = shift(p[1], int(disps[l][p]), view)
            xq = shift(q[1], int(disps[l][q]), view)
            if lm > 0 and 0 <= xp < w and 0 <= xq < w:
                wgt += lm * grad_scale(edge_diff(others[l], (p[0], xp), (q[0], xq)), g)
            total += ls2 * wgt
    for anchors in cliques:
        for l in range(len(masks) - 1):
            (y0, x0), (y1, x1) = anchors[l], anchors[l + 1]
            if masks[l][y0, x0] != masks[l + 1][y1, x1]:
                diff = float(np.max(np.abs(pixel(images[l], y0, x0) - pixel(images[l + 1], y1, x1))))
                total += ls2 * grad_scale(diff, g)
    return total


def affinity(fa, fb, d_max, view, window):
    h, w, _ = fa.shape
    r = window // 2
    out = np.zeros((h, w, d_max + 1))
    for d in range(d_max + 1):
        raw = np.zeros((h, w))
        for y in range(h):
            for x in range(w):
                xs = shift(x, d, view)
                if 0 <= xs < w:
                    raw[y, x] = math.sqrt(float(((fa[y, x] - fb[y, xs]) ** 2).sum()))
        for y in range(h):
            for x in range(w):
                if not 0 <= shift(x, d, view) < w:
                    continue
                acc = 0.0
                for yy in range(y - r, y + r + 1):
                    for xx in range(x - r, x + r + 1):
                        if 0 <= yy < h and 0 <= xx < w:
                            acc += raw[yy, xx]
                out[y, x, d] = acc / (window * window)
    return out


def hoyer(v):
    v = [abs(float(a)) for a in v]
    n = len(v)
    l1 = sum(v)
    l2 = math.sqrt(sum(a * a for a in v))
    if l2 == 0:
        return 0.0
    return (math.sqrt(n) - l1 / l2) / (math.sqrt(n) - 1)


def all_binary(shape):
    n = int(np.prod(shape))
    for bits in itertools.product((0, 1), repeat=n):
        yield np.array(bits, dtype=np.uint8).reshape(shape)
