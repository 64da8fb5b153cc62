import json

import numpy as np
import pytest

from mutualseg.dataset_io import (
    Correspondence,
    DatasetError,
    FallbackInitializer,
    OutputWriter,
    SequenceManifest,
    disparity_filename,
    load_sequence,
    mask_filename,
    parse_manifest,
    read_correspondences,
    read_disparity,
    read_image,
    read_mask,
    write_correspondences,
    write_image,
    write_manifest,
    write_outputs,
)


def _toy_sequence(root, n=3, sizes=((12, 16), (12, 16))):
    rng = np.random.default_rng(0)
    (root / "a").mkdir()
    (root / "b").mkdir()
    (root / "m").mkdir()
    for t in range(n):
        write_image(root / "a" / f"{t}.png", rng.integers(0, 256, sizes[0] + (3,)).astype(np.uint8))
        write_image(root / "b" / f"{t}.png", rng.integers(0, 256, sizes[1]).astype(np.uint8))
        m = np.zeros(sizes[0], np.uint8)
        m[2:5, 3:9] = 255
        write_image(root / "m" / f"{t}.png", m)
    text = "# toy\nview0=a/{frame}.png\nview1=b/{frame}.png\ninit0=m/{frame}.png\nd_max=4\n"
    (root / "seq.txt").write_text(text)
    return root / "seq.txt"


def test_streams_frames_in_order(tmp_path):
    items = list(load_sequence(parse_manifest(_toy_sequence(tmp_path))))
    assert [i.pair.frame_index for i in items] == [0, 1, 2]
    first = items[0]
    assert first.pair.images[0].shape == (12, 16, 3) and first.pair.images[1].shape == (12, 16)
    assert first.init_masks[1] is None and first.init_masks[0].sum() == 18
    assert set(np.unique(first.init_masks[0])) == {0, 1}


def test_mismatched_views_fail_at_first_frame(tmp_path):
    manifest = parse_manifest(_toy_sequence(tmp_path, sizes=((12, 16), (12, 15))))
    with pytest.raises(DatasetError, match="frame 0: view sizes differ"):
        next(load_sequence(manifest))


def test_manifest_errors(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("view0=a\nview1=b\nd_max=3\nbogus=1\n")
    with pytest.raises(DatasetError, match="unknown manifest key"):
        parse_manifest(p)
    p.write_text("view0=a\nd_max=3\n")
    with pytest.raises(DatasetError, match="view1"):
        parse_manifest(p)
    p.write_text("view0=a\nview1=b\nd_max=zero\n")
    with pytest.raises(DatasetError):
        parse_manifest(p)
    with pytest.raises(DatasetError):
        parse_manifest(tmp_path / "absent.txt")


def test_manifest_round_trip(tmp_path):
    m = SequenceManifest(root=tmp_path, view_patterns=("x/{frame}.png", "y/{frame}.png"), d_max=9,
                         gt_patterns=("g/{frame}.png", None), correspondences="c.csv", frames=4, start=2)
    write_manifest(tmp_path / "s.txt", m)
    back = parse_manifest(tmp_path / "s.txt")
    assert back == m and back.frame_indices() == [2, 3, 4, 5]


def test_image_and_mask_reading(tmp_path):
    rgb = np.zeros((4, 5, 3), np.uint8)
    rgb[..., 0] = 200
    write_image(tmp_path / "c.png", rgb)
    assert np.array_equal(read_image(tmp_path / "c.png"), rgb)
    write_image(tmp_path / "g.png", np.stack([np.full((4, 5), 7, np.uint8)] * 3, axis=2))
    assert read_image(tmp_path / "g.png").shape == (4, 5)
    write_image(tmp_path / "m.png", np.array([[0, 255], [255, 0]], np.uint8))
    assert read_mask(tmp_path / "m.png").tolist() == [[0, 1], [1, 0]]
    write_image(tmp_path / "d.png", np.zeros((2, 2), np.uint16))
    with pytest.raises(DatasetError, match="8-bit"):
        read_image(tmp_path / "d.png")
    with pytest.raises(DatasetError, match="not found"):
        read_image(tmp_path / "nope.png", 3)


def test_correspondences_round_trip(tmp_path):
    rows = [Correspondence(0, 0, 3, 4, 12.0), Correspondence(1, 1, 0, 0, 2.5)]
    write_correspondences(tmp_path / "c.csv", rows)
    assert read_correspondences(tmp_path / "c.csv") == rows
    (tmp_path / "bad.csv").write_text("frame,view,x,y\n0,0,1,1\n")
    with pytest.raises(DatasetError, match="header"):
        read_correspondences(tmp_path / "bad.csv")
    (tmp_path / "bad.csv").write_text("frame,view,x,y,disparity\n0,3,1,1,2\n")
    with pytest.raises(DatasetError, match="invalid"):
        read_correspondences(tmp_path / "bad.csv")


def test_fallback_detects_inserted_square():
    fb = FallbackInitializer()
    bg = np.random.default_rng(0).integers(40, 60, (30, 40, 3)).astype(np.uint8)
    first = fb(bg)
    assert fb.degenerate and not first.any()
    for _ in range(4):
        assert not fb(bg).any() and not fb.degenerate
    frame = bg.copy()
    frame[10:20, 15:25] = 250
    mask = fb(frame)
    assert mask[10:20, 15:25].all() and mask.sum() == 100


def test_disparity_storage(tmp_path):
    disp = np.full((3, 4), 12.0)
    disp[0, 0] = 0.5
    paths = write_outputs(tmp_path, 7, [np.eye(3, 4), np.zeros((3, 4))], [disp, disp])
    assert tmp_path / mask_filename(1, 7) in paths
    raw = read_image(tmp_path / mask_filename(0, 7))
    assert set(np.unique(raw)) == {0, 255}
    import cv2
    stored = cv2.imread(str(tmp_path / disparity_filename(0, 7)), cv2.IMREAD_UNCHANGED)
    assert stored[1, 1] == 3072 and stored.dtype == np.uint16
    assert read_disparity(tmp_path / disparity_filename(0, 7))[1, 1] == 12.0
    assert json.loads((tmp_path / "outputs.json").read_text())["disparity_scale"] == 256
    with pytest.raises(DatasetError):
        write_outputs(tmp_path, 8, [disp > 0], [np.full((3, 4), 300.0)])


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(DatasetError):
        OutputWriter(blocker / "out")
    with pytest.raises(DatasetError):
        write_image(blocker / "x.png", np.zeros((2, 2), np.uint8))
