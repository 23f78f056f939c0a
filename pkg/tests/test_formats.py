import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densefeat.formats import (
    FormatError,
    read_codebook,
    read_descriptors,
    read_pca,
    read_pgm16,
    read_rmap,
    write_codebook,
    write_descriptors,
    write_pca,
    write_pgm16,
    write_rmap,
)
from densefeat.keypoints import Keypoint, format_keypoints, parse_keypoints, read_keypoints, write_keypoints
from densefeat.region import load_edge_map, write_edge_map


def test_edge_map_round_trip_bit_exact(tmp_path):
    m = np.array([[0.0, 0.25], [1.5, 3.0]])
    write_edge_map(tmp_path / "e.emap", m)
    assert np.array_equal(load_edge_map(tmp_path / "e.emap"), m)
    raw = (tmp_path / "e.emap").read_bytes()
    assert raw[:4] == b"EMAP" and struct.unpack_from("<II", raw, 4) == (2, 2)
    assert len(raw) == 12 + 16


def test_edge_map_truncated_reports_offset(tmp_path):
    write_edge_map(tmp_path / "e.emap", np.ones((2, 2)))
    raw = (tmp_path / "e.emap").read_bytes()
    (tmp_path / "t.emap").write_bytes(raw[:-3])
    with pytest.raises(FormatError) as exc:
        load_edge_map(tmp_path / "t.emap")
    assert exc.value.offset == len(raw) - 3
    assert "offset" in str(exc.value)


def test_edge_map_negative_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_edge_map(tmp_path / "n.emap", np.array([[-1.0]]))
    # hand-written file with a negative value in the second cell
    (tmp_path / "n.emap").write_bytes(b"EMAP" + struct.pack("<II", 2, 1) + struct.pack("<ff", 1.0, -2.0))
    with pytest.raises(FormatError) as exc:
        load_edge_map(tmp_path / "n.emap")
    assert exc.value.offset == 16


def test_raster_bad_magic_and_trailing(tmp_path):
    write_rmap(tmp_path / "r.rmap", np.array([[-1.0, 2.0]]))
    assert np.array_equal(read_rmap(tmp_path / "r.rmap"), [[-1.0, 2.0]])
    with pytest.raises(FormatError):
        load_edge_map(tmp_path / "r.rmap")
    (tmp_path / "x.rmap").write_bytes((tmp_path / "r.rmap").read_bytes() + b"\0")
    with pytest.raises(FormatError):
        read_rmap(tmp_path / "x.rmap")


def test_descriptor_file_layout(tmp_path):
    d = np.arange(6, dtype=np.float64).reshape(2, 3)
    write_descriptors(tmp_path / "d.dsc", d)
    raw = (tmp_path / "d.dsc").read_bytes()
    assert raw[:4] == b"DSC1"
    assert struct.unpack_from("<II", raw, 4) == (2, 3)
    assert struct.unpack_from("<6f", raw, 12) == (0, 1, 2, 3, 4, 5)
    assert np.array_equal(read_descriptors(tmp_path / "d.dsc"), d)
    write_descriptors(tmp_path / "e.dsc", np.zeros((0, 128)))
    assert read_descriptors(tmp_path / "e.dsc").shape == (0, 128)
    (tmp_path / "t.dsc").write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_descriptors(tmp_path / "t.dsc")


def test_codebook_and_pca_round_trip(tmp_path):
    c = np.random.default_rng(0).random((4, 5)).astype(np.float32).astype(np.float64)
    write_codebook(tmp_path / "c.cbk", c, 2**40 + 3)
    got, seed = read_codebook(tmp_path / "c.cbk")
    assert seed == 2**40 + 3 and np.array_equal(got, c)
    raw = (tmp_path / "c.cbk").read_bytes()
    assert raw[:4] == b"CBK1" and struct.unpack_from("<IIQ", raw, 4) == (4, 5, 2**40 + 3)
    mean, rot = np.arange(3.0), np.eye(3)
    write_pca(tmp_path / "p.pca", mean, rot)
    m2, r2 = read_pca(tmp_path / "p.pca")
    assert np.array_equal(m2, mean) and np.array_equal(r2, rot)


def test_pgm16_round_trip_with_whitespace_like_payload(tmp_path):
    # first payload byte 0x0a would be eaten by a whitespace-splitting parser
    labels = np.array([[0x0A0B, 1], [65535, 0]])
    write_pgm16(tmp_path / "l.pgm", labels)
    assert np.array_equal(read_pgm16(tmp_path / "l.pgm"), labels)


def test_keypoint_text_format():
    kps = [Keypoint(1.5, 2.25, 1.414213562, -0.5, 2, "zernike:1:-1", "min")]
    text = format_keypoints(kps)
    assert text.splitlines() == ["densefeat-kp 1", "1", "1.500000 2.250000 1.414214 -0.500000 2 zernike:1:-1 min"]
    back = parse_keypoints(text)
    assert back[0].detector_id == "zernike:1:-1" and back[0].base_detector == "zernike"


@pytest.mark.parametrize(
    "text",
    ["", "densefeat-kp 2\n0\n", "densefeat-kp 1\n2\n1 2 3 4 0 dense none\n", "densefeat-kp 1\n1\n1 2 3 4 0 dense up\n"],
)
def test_keypoint_text_errors(text):
    with pytest.raises(ValueError):
        parse_keypoints(text)


coord = st.floats(0, 5000, allow_nan=False).map(lambda v: round(v, 6))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(coord, coord, st.floats(0.5, 50).map(lambda v: round(v, 6)), st.integers(0, 9)), max_size=20))
def test_keypoint_file_round_trip(tmp_path_factory, rows):
    kps = [Keypoint(x, y, s, 0.0, i, "dense", "none") for x, y, s, i in rows]
    p = tmp_path_factory.mktemp("kp") / "a.kp"
    write_keypoints(p, kps)
    back = read_keypoints(p)
    assert len(back) == len(kps)
    for a, b in zip(kps, back):
        assert abs(a.x - b.x) <= 5e-7 and abs(a.y - b.y) <= 5e-7 and a.scale_index == b.scale_index
    # a second write of the parsed list reproduces the bytes exactly
    q = p.with_name("b.kp")
    write_keypoints(q, back)
    assert q.read_bytes() == p.read_bytes()
