import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mutualseg.core import (
    DisparityLabeling,
    FramePair,
    IntegrityError,
    LabelSpaces,
    as_mask,
    channel_max_diff,
    compute_gradient_map,
    count_correspondences,
    gradient_scale,
    rectified_shift,
    sample_shifted,
)

import oracles


def test_rectified_shift_examples():
    assert rectified_shift((10, 5), 0, 0, 20) == (10, 5)
    assert rectified_shift((10, 5), 3, 0, 20) == (7, 5)
    assert rectified_shift((2, 5), 3, 0, 20) is None
    assert rectified_shift((18, 5), 3, 1, 20) is None


@given(x=st.integers(0, 39), y=st.integers(0, 9), d=st.integers(0, 39))
def test_rectified_shift_round_trip(x, y, d):
    q = rectified_shift((x, y), d, 0, 40)
    if q is not None:
        assert rectified_shift(q, d, 1, 40) == (x, y)


def test_bad_view_rejected():
    with pytest.raises(ValueError):
        rectified_shift((0, 0), 1, 2, 10)


def test_frame_pair_validation():
    a = np.zeros((4, 5, 3), np.uint8)
    FramePair((a, np.zeros((4, 5), np.uint8)))
    with pytest.raises(ValueError, match="5x4 vs 6x4"):
        FramePair((a, np.zeros((4, 6), np.uint8)))
    with pytest.raises(ValueError):
        FramePair((a, a), rectified=False)
    with pytest.raises(ValueError):
        FramePair((a, np.full((4, 5), 300.0)))


def test_label_spaces():
    sp = LabelSpaces(64)
    assert sp.n_disparities == 65 and list(sp.disparities)[-1] == 64
    with pytest.raises(ValueError):
        LabelSpaces(0)
    with pytest.raises(ValueError):
        sp.check_width(64)


def test_as_mask():
    assert as_mask(np.array([[True, False]])).dtype == np.uint8
    with pytest.raises(ValueError):
        as_mask(np.array([[0, 2]]))


@settings(max_examples=50, deadline=None)
@given(labels=arrays(np.int64, (5, 7), elements=st.integers(0, 6)), view=st.sampled_from([0, 1]))
def test_counts_match_loop(labels, view):
    counts = count_correspondences(labels, view)
    assert np.array_equal(counts, oracles.counts(labels, view))
    in_bounds = sum(0 <= oracles.shift(x, labels[y, x], view) < 7 for y in range(5) for x in range(7))
    assert counts.sum() == in_bounds


def test_stale_counts_detected():
    lab = DisparityLabeling(np.zeros((2, 3), np.int64), 0, 2)
    lab.labels[0, 2] = 2
    with pytest.raises(IntegrityError):
        lab.check_counts()
    lab.recount()
    lab.check_counts()


def test_labels_outside_space_rejected():
    with pytest.raises(ValueError):
        DisparityLabeling(np.full((2, 2), 5), 0, 4)


def test_sample_shifted_fills_out_of_bounds():
    values = np.arange(6, dtype=float).reshape(1, 6)
    labels = np.array([[0, 2, 1, 4, 3, 0]])
    out = sample_shifted(values, labels, 0, fill=-1)
    assert out.tolist() == [[0, -1, 1, -1, 1, 5]]


def test_gradient_map_examples():
    g = compute_gradient_map(np.full((3, 3), 7.0))
    assert not g.horizontal.any() and not g.vertical.any()
    img = np.array([[40.0, 70.0]])
    assert compute_gradient_map(img).edge((0, 0), (1, 0)) == 30.0
    rgb = np.array([[[10, 0, 0], [10, 50, 0]]], float)
    g = compute_gradient_map(rgb)
    assert g.edge((1, 0), (0, 0)) == 50.0
    with pytest.raises(ValueError):
        g.edge((0, 0), (0, 0))


def test_gradient_scale_closed_forms():
    assert gradient_scale(30.0, 30.0) == pytest.approx(0.5, abs=1e-12)
    assert gradient_scale(0.0, 30.0) == pytest.approx(math.e - 0.5, abs=1e-12)
    assert gradient_scale(60.0, 30.0) == 0.0
    knee = 30.0 * (1 + math.log(2))
    assert gradient_scale(knee + 1e-6, 30.0) == 0.0


@given(a=st.floats(0, 255), b=st.floats(0, 255))
def test_gradient_scale_monotone(a, b):
    lo, hi = sorted((a, b))
    assert gradient_scale(lo, 30.0) >= gradient_scale(hi, 30.0) >= 0


def test_channel_max_diff():
    assert channel_max_diff([10, 0, 0], [10, 50, 0]) == 50.0
    assert channel_max_diff(3.0, 5.0) == 2.0
