import numpy as np
import pytest

from mutualseg.core import DisparityLabeling, compute_gradient_map
from mutualseg.descriptors import APPEARANCE, SHAPE, AffinityCostVolume, SaliencyMap, disparity_validity
from mutualseg.inference import StereoPriors
from mutualseg.segm_model import GaussianMixture
from mutualseg.stereo_model import edge_scales

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h, w, channels=3):
    shape = (h, w) if channels == 1 else (h, w, channels)
    return rng.integers(0, 256, size=shape).astype(np.float64)


def random_volume(rng, h, w, d_max, view):
    costs = rng.uniform(0, 5, size=(h, w, d_max + 1))
    costs *= disparity_validity(w, d_max, view)[None]
    return AffinityCostVolume(costs, view)


def random_stereo_instance(rng, h=8, w=8, d_max=3, view=0, channels=3, shape_cue=True):
    image = random_image(rng, h, w, channels)
    labels = rng.integers(0, d_max + 1, size=(h, w))
    lab = DisparityLabeling(labels, view, d_max)
    volumes = {APPEARANCE: random_volume(rng, h, w, d_max, view)}
    sal = {APPEARANCE: SaliencyMap(rng.uniform(0, 1, (h, w)), APPEARANCE)}
    if shape_cue:
        volumes[SHAPE] = random_volume(rng, h, w, d_max, view)
        sal[SHAPE] = SaliencyMap(rng.uniform(0, 1, (h, w)) * (rng.uniform(size=(h, w)) < 0.6), SHAPE)
    grads = compute_gradient_map(image)
    return image, lab, volumes, sal, grads


def make_priors(volumes, saliencies, grads, g, shape, n_disp):
    pr = StereoPriors(dict(volumes), dict(saliencies), scales=edge_scales(grads, g))
    pr.combine(shape, n_disp)
    return pr


def random_mixture(rng, channels, k):
    w = rng.uniform(0.2, 1.0, k)
    w /= w.sum()
    means = rng.uniform(0, 255, (k, channels))
    covs = []
    for _ in range(k):
        a = rng.normal(size=(channels, channels)) * 20
        covs.append(a @ a.T + 50 * np.eye(channels))
    return GaussianMixture(w, means, np.array(covs))


def mixture_tuple(gm):
    return gm.weights, gm.means, gm.covs


def random_segm_instance(rng, h=8, w=8, layers=2, view=0, d_max=3, channels=(3, 1)):
    """Random inputs for one view's segmentation energy plus the matching oracle value."""
    from mutualseg.segm_model import ColorModel, SegmParams, TemporalCliqueSet, build_contour_maps, total_segm_energy
    import oracles

    params = SegmParams(lambda_c=float(rng.uniform(0.1, 8)), lambda_s2=float(rng.uniform(0.1, 8)),
                        lambda_m=float(rng.choice([0.0, rng.uniform(0.05, 1)])), g=float(rng.uniform(10, 60)),
                        contour_tau=4.0, contour_cap=32.0, layers=layers)
    c_own, c_other = channels if view == 0 else channels[::-1]
    images = [random_image(rng, h, w, c_own) for _ in range(layers)]
    others = [random_image(rng, h, w, c_other) for _ in range(layers)]
    masks = [(rng.uniform(size=(h, w)) < 0.5).astype(np.uint8) for _ in range(layers)]
    prev_own = [(rng.uniform(size=(h, w)) < 0.5).astype(np.uint8) for _ in range(layers)]
    prev_other = [(rng.uniform(size=(h, w)) < 0.5).astype(np.uint8) for _ in range(layers)]
    disps = [rng.integers(0, d_max + 1, (h, w)) for _ in range(layers)]
    colors = [ColorModel(random_mixture(rng, c_own, 2), random_mixture(rng, c_own, 3)) for _ in range(layers)]
    n_cliques = int(rng.integers(1, 12))
    anchors = np.stack([rng.integers(0, h, (n_cliques, layers)), rng.integers(0, w, (n_cliques, layers))], axis=2)
    cliques = TemporalCliqueSet(anchors)
    grads = [compute_gradient_map(im) for im in images]
    got = total_segm_energy(masks, images, grads, colors, [build_contour_maps(m, params) for m in prev_own],
                            [build_contour_maps(m, params) for m in prev_other], others, disps, view, cliques,
                            params).total
    want = oracles.segm_energy(
        masks, images, others, disps, view,
        [(mixture_tuple(c.foreground), mixture_tuple(c.background)) for c in colors],
        prev_own, prev_other, [tuple(map(tuple, a)) for a in anchors],
        {"lambda_c": params.lambda_c, "lambda_s2": params.lambda_s2, "lambda_m": params.lambda_m, "g": params.g},
    )
    return got, want
