import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mutualseg.core import DisparityLabeling, IntegrityError, compute_gradient_map
from mutualseg.descriptors import APPEARANCE, AffinityCostVolume, SaliencyMap
from mutualseg.stereo_model import (
    StereoParams,
    charge_term,
    data_term_cost,
    pairwise_disparity_cost,
    refund_term,
    smoothness_cost,
    total_stereo_energy,
    uniqueness_cost,
    uniqueness_move_delta,
)

import oracles
from conftest import random_stereo_instance


def test_uniqueness_closed_forms():
    assert uniqueness_cost(0) == 0.0
    assert uniqueness_cost(1) == 0.0
    assert uniqueness_cost(2) == pytest.approx(1.0, abs=1e-12)
    assert uniqueness_cost(3) == pytest.approx(2.5, abs=1e-12)
    assert np.allclose(uniqueness_cost(np.array([[0, 1], [2, 3]])), [[0, 0], [1, 2.5]])


@given(n=st.integers(0, 40), w=st.floats(1, 10))
def test_charge_and_refund_bracket_the_marginal(n, w):
    assert charge_term(n, w) == pytest.approx(uniqueness_cost(n + 1, w) - uniqueness_cost(n, w), abs=1e-9)
    if n >= 1:
        # the average per link never exceeds the saving of removing the last one
        assert refund_term(n, w) <= uniqueness_cost(n, w) - uniqueness_cost(n - 1, w) + 1e-12
    assert uniqueness_cost(n, w) == pytest.approx(oracles.uniqueness(n, w), abs=1e-9)


def test_data_term_examples():
    costs = np.zeros((3, 3, 2), np.float32)
    costs[1, 1, 0] = 2.0
    weights = np.zeros((3, 3))
    weights[1, 1] = 0.5
    lab = DisparityLabeling(np.zeros((3, 3), np.int64), 0, 1)
    assert data_term_cost(AffinityCostVolume(costs, 0), SaliencyMap(weights, APPEARANCE), lab) == 1.0
    assert data_term_cost(AffinityCostVolume(costs, 0), SaliencyMap(np.zeros((3, 3)), APPEARANCE), lab) == 0.0


def test_smoothness_examples():
    p = StereoParams()
    assert pairwise_disparity_cost(0, 3, 0.5, p) == pytest.approx(0.001 * 9 * 0.5)
    assert pairwise_disparity_cost(0, 25, 1.0, p) == pytest.approx(0.001 * 100)
    lab = DisparityLabeling.uniform((4, 4), 2, 0, 5)
    assert smoothness_cost(lab, compute_gradient_map(np.zeros((4, 4))), p) == 0.0


def test_zero_saliency_uniform_labeling_is_free():
    rng = np.random.default_rng(0)
    vol = AffinityCostVolume(rng.uniform(size=(4, 6, 3)).astype(np.float32), 1)
    lab = DisparityLabeling.uniform((4, 6), 1, 1, 2)
    e = total_stereo_energy(lab, {APPEARANCE: vol}, {APPEARANCE: SaliencyMap(np.zeros((4, 6)), APPEARANCE)},
                            compute_gradient_map(rng.uniform(0, 255, (4, 6))), StereoParams())
    assert e.total == 0.0


def test_stale_counts_raise():
    _, lab, vols, sals, grads = random_stereo_instance(np.random.default_rng(0))
    lab.labels[0, 7] = (lab.labels[0, 7] + 1) % 4
    with pytest.raises(IntegrityError):
        total_stereo_energy(lab, vols, sals, grads, StereoParams())


@pytest.mark.parametrize("seed", range(10))
def test_energy_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    view = seed % 2
    params = StereoParams(lambda_u=rng.uniform(0, 1), lambda_s1=rng.uniform(0, 0.5), g=rng.uniform(10, 50),
                          truncation=int(rng.integers(1, 4)))
    image, lab, vols, sals, grads = random_stereo_instance(rng, view=view)
    got = total_stereo_energy(lab, vols, sals, grads, params).total
    want = oracles.stereo_energy(lab.labels, view, image, [v.costs for v in vols.values()],
                                 [sals[k].weights for k in vols], params.lambda_u, params.lambda_s1, params.w,
                                 params.g, params.truncation)
    assert got == pytest.approx(want, rel=0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10**6), d_new=st.integers(0, 5), y=st.integers(0, 3), x=st.integers(0, 7))
def test_single_relabel_never_underestimated(seed, d_new, y, x):
    rng = np.random.default_rng(seed)
    view = seed % 2
    lab = DisparityLabeling(rng.integers(0, 6, (4, 8)), view, 5)
    params = StereoParams(lambda_u=1.0, w=float(rng.uniform(1, 5)))
    est = uniqueness_move_delta((x, y), int(lab.labels[y, x]), d_new, lab, params)
    before = uniqueness_cost(lab.counts, params.w).sum()
    new = lab.copy()
    new.labels[y, x] = d_new
    new.recount()
    after = uniqueness_cost(new.counts, params.w).sum()
    assert after - before <= est + 1e-12


def test_no_op_move_estimate():
    lab = DisparityLabeling(np.zeros((1, 4), np.int64), 0, 3)
    est = uniqueness_move_delta((2, 0), 0, 0, lab, StereoParams())
    # N = 1 at the target: charge 3 * 1 / 3 = 1, refund U(1) / 1 = 0
    assert est == pytest.approx(0.4)
    # realized change of a no-op is 0, which the estimate covers
    assert 0.0 <= est
