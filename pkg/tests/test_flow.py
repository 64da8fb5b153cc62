import cv2
import numpy as np
import pytest

from mutualseg.flow import (
    FileFlowProvider,
    FlowFileError,
    chain_and_round,
    compute_block_flow,
    load_flow_file,
    stride_anchors,
    warp_labels,
    write_flow_file,
    zero_flow,
)


def _texture(seed, shape=(64, 64)):
    rng = np.random.default_rng(seed)
    return np.clip(cv2.GaussianBlur(rng.uniform(0, 255, shape), (0, 0), 1.2) * 3 - 250, 0, 255)


def test_identical_frames_zero_flow():
    img = _texture(0)
    assert not compute_block_flow(img, img).any()


def test_global_shift_recovered():
    cur = _texture(1)
    prev = np.roll(cur, 3, axis=1)
    flow = compute_block_flow(cur, prev)
    inner = flow[16:-16, 16:-16]
    assert np.abs(inner[..., 0] - 3).max() <= 1 and np.abs(inner[..., 1]).max() <= 1


def test_noise_flow_within_radius():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(0, 255, (2, 40, 48))
    flow = compute_block_flow(a, b, radius=5)
    assert np.abs(flow).max() <= 5


def test_flo_round_trip_and_errors(tmp_path):
    p = tmp_path / "f.flo"
    f = np.random.default_rng(0).normal(size=(5, 7, 2)).astype(np.float32)
    write_flow_file(p, f)
    assert np.array_equal(load_flow_file(p, (5, 7)), f.astype(np.float64))
    write_flow_file(p, zero_flow((5, 7)))
    assert not load_flow_file(p).any()
    with pytest.raises(FlowFileError, match="7x5 but frames are 8x5"):
        load_flow_file(p, (5, 8))
    bad = f.copy()
    bad[1, 1, 0] = np.nan
    write_flow_file(p, bad)
    with pytest.raises(FlowFileError, match="non-finite"):
        load_flow_file(p)
    p.write_bytes(b"\x00" * 20)
    with pytest.raises(FlowFileError, match="magic"):
        load_flow_file(p)
    with pytest.raises(FlowFileError):
        load_flow_file(tmp_path / "missing.flo")


def test_file_provider(tmp_path):
    write_flow_file(tmp_path / "flow_0003.flo", np.ones((4, 6, 2)))
    prov = FileFlowProvider(str(tmp_path / "flow_{frame:04d}.flo"))
    assert prov(np.zeros((4, 6)), np.zeros((4, 6)), 3).shape == (4, 6, 2)
    with pytest.raises(FlowFileError):
        prov(np.zeros((4, 6)), np.zeros((4, 6)), None)


def test_chain_and_round_examples():
    shape = (10, 20)
    anchors = stride_anchors(shape, 2)
    same = chain_and_round(anchors, [zero_flow(shape)] * 2, shape)
    assert np.array_equal(same[:, 0], same[:, 1]) and np.array_equal(same[:, 1], same[:, 2])

    flow = np.zeros(shape + (2,))
    flow[..., 0] = 3
    out = chain_and_round(np.array([[4, 5], [4, 16]]), [flow, flow], shape)
    assert out[0, :, 1].tolist() == [5, 8, 11]
    assert out[1, :, 1].tolist() == [16, 19, 19]
    assert (out[:, :, 0] == 4).all()


def test_stride_anchors_and_warp():
    a = stride_anchors((5, 6), 2)
    assert len(a) == 3 * 3 and a.min() == 0 and a[:, 0].max() == 4
    labels = np.arange(12).reshape(3, 4)
    flow = np.zeros((3, 4, 2))
    flow[..., 0] = -1
    assert warp_labels(labels, flow)[:, 1:].tolist() == labels[:, :-1].tolist()
