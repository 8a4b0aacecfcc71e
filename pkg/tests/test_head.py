import math

import numpy as np
import pytest

from wbcdetect.errors import DecodeError, EncodeError, ShapeError
from wbcdetect.geometry import PIXEL_NETWORK, Box
from wbcdetect.head import (
    AnchorBox,
    GridTensor,
    HeadSpec,
    RawDetection,
    decode_cell,
    decode_grid,
    encode_cell,
    sigmoid,
)


def random_spec(num_classes, rng, input_size=416):
    anchors = tuple((rng.uniform(5, 200), rng.uniform(5, 200)) for _ in range(9))
    return HeadSpec(num_classes=num_classes, input_size=input_size, anchors=anchors)


class TestDecodeCell:
    def test_all_zero_vector(self):
        d = decode_cell([0, 0, 0, 0, 0, 0], cell=(0, 0), anchor=AnchorBox(10, 20), stride=32)
        assert (d.box.cx, d.box.cy) == (16.0, 16.0)
        assert (d.box.w, d.box.h) == (10.0, 20.0)
        assert d.objectness == 0.5
        assert d.class_probs == (0.5,)
        assert d.box.frame == PIXEL_NETWORK

    def test_width_doubles_at_log_two(self):
        d = decode_cell(
            [0, 0, math.log(2), 0, 0, 0], cell=(0, 0), anchor=AnchorBox(10, 20), stride=32
        )
        assert d.box.w == pytest.approx(20.0, rel=1e-12)

    def test_center_confined_at_extreme_logits(self):
        for t in (-50.0, -5.0, 5.0, 50.0, 500.0):
            d = decode_cell([t, t, 0, 0, 0, 0], cell=(3, 2), anchor=AnchorBox(10, 20), stride=32)
            assert 3 * 32 <= d.box.cx < 4 * 32
            assert 2 * 32 <= d.box.cy < 3 * 32

    def test_nonfinite_input_rejected(self):
        with pytest.raises(DecodeError):
            decode_cell([0, 0, float("nan"), 0, 0, 0], (0, 0), AnchorBox(10, 20), 32)
        with pytest.raises(DecodeError):
            decode_cell([float("inf"), 0, 0, 0, 0, 0], (0, 0), AnchorBox(10, 20), 32)

    def test_sizes_positive_even_at_deep_underflow(self):
        d = decode_cell([0, 0, -800.0, -800.0, 0, 0], (0, 0), AnchorBox(10, 20), 32)
        assert d.box.w > 0 and d.box.h > 0


class TestDepthContract:
    def test_single_class_head_is_18(self):
        assert HeadSpec(num_classes=1).depth == 18
        assert HeadSpec(num_classes=1, depth=18).depth == 18

    def test_four_class_head_is_27(self):
        assert HeadSpec(num_classes=4).depth == 27
        assert HeadSpec(num_classes=4, depth=27).depth == 27

    @pytest.mark.parametrize("c", range(1, 11))
    def test_only_formula_depth_accepted(self, c):
        want = 3 * (5 + c)
        HeadSpec(num_classes=c, depth=want)
        for bad in (want - 1, want + 1, 18 if want != 18 else 21):
            with pytest.raises(ShapeError):
                HeadSpec(num_classes=c, depth=bad)

    def test_grid_depth_must_match_spec(self):
        spec = HeadSpec(num_classes=4)
        wrong = GridTensor(0, np.zeros((13, 13, 3, 6)))  # depth 18 against a 27 spec
        with pytest.raises(ShapeError, match="27"):
            decode_grid(wrong, spec)


class TestDecodeGrid:
    def test_count_is_cells_times_slots(self):
        spec = HeadSpec(num_classes=4)
        g = GridTensor(0, np.zeros((13, 13, 3, 9)))
        dets = decode_grid(g, spec)
        assert len(dets) == 13 * 13 * 3

    def test_zero_tensor_midpoints(self):
        spec = HeadSpec(num_classes=1)
        g = GridTensor(2, np.zeros((52, 52, 3, 6)))
        dets = decode_grid(g, spec)
        stride = spec.strides[2]
        assert all(d.objectness == 0.5 for d in dets)
        for d in dets:
            assert d.box.cx == (d.cell[0] + 0.5) * stride
            assert d.box.cy == (d.cell[1] + 0.5) * stride

    def test_matches_decode_cell_slotwise(self):
        rng = np.random.default_rng(7)
        spec = random_spec(4, rng, input_size=64)
        vals = rng.uniform(-4, 4, size=(2, 2, 3, 9))
        g = GridTensor(0, vals)
        dets = decode_grid(g, spec)
        anchors = spec.anchors_for_scale(0)
        i = 0
        for y in range(2):
            for x in range(2):
                for a in range(3):
                    ref = decode_cell(
                        vals[y, x, a], (x, y), anchors[a], spec.strides[0], 0, a
                    )
                    got = dets[i]
                    assert got.cell == (x, y) and got.anchor_index == a
                    assert got.box.cx == pytest.approx(ref.box.cx, rel=1e-12)
                    assert got.box.w == pytest.approx(ref.box.w, rel=1e-12)
                    assert got.objectness == pytest.approx(ref.objectness, rel=1e-12)
                    for p, q in zip(got.class_probs, ref.class_probs):
                        assert p == pytest.approx(q, rel=1e-12)
                    i += 1

    def test_row_major_order(self):
        spec = HeadSpec(num_classes=1, input_size=64)
        g = GridTensor(0, np.zeros((2, 2, 3, 6)))
        cells = [(d.cell, d.anchor_index) for d in decode_grid(g, spec)]
        assert cells == [
            ((0, 0), 0), ((0, 0), 1), ((0, 0), 2),
            ((1, 0), 0), ((1, 0), 1), ((1, 0), 2),
            ((0, 1), 0), ((0, 1), 1), ((0, 1), 2),
            ((1, 1), 0), ((1, 1), 1), ((1, 1), 2),
        ]

    def test_wrong_grid_size_rejected(self):
        spec = HeadSpec(num_classes=1)
        with pytest.raises(ShapeError):
            decode_grid(GridTensor(0, np.zeros((12, 13, 3, 6))), spec)

    def test_nonfinite_grid_rejected(self):
        spec = HeadSpec(num_classes=1)
        vals = np.zeros((13, 13, 3, 6))
        vals[4, 4, 1, 2] = np.inf
        with pytest.raises(DecodeError):
            decode_grid(GridTensor(0, vals), spec)


class TestEncodeCell:
    def test_objectness_half_gives_zero_logit(self):
        d = RawDetection(
            Box(16.0, 16.0, 10.0, 20.0, PIXEL_NETWORK), 0.5, (0.5,), 0, (0, 0), 0
        )
        t = encode_cell(d, AnchorBox(10, 20), 32)
        assert t[4] == 0.0

    def test_anchor_width_gives_zero_log(self):
        d = RawDetection(
            Box(16.0, 16.0, 10.0, 20.0, PIXEL_NETWORK), 0.5, (0.5,), 0, (0, 0), 0
        )
        t = encode_cell(d, AnchorBox(10, 20), 32)
        assert t[2] == 0.0 and t[3] == 0.0

    def test_roundtrip_random_logits(self):
        rng = np.random.default_rng(11)
        anchor = AnchorBox(24.0, 56.0)
        for _ in range(2000):
            t = rng.uniform(-5, 5, size=9)
            d = decode_cell(t, (rng.integers(0, 13), rng.integers(0, 13)), anchor, 32, 0, 1)
            back = encode_cell(d, anchor, 32)
            assert np.allclose(back, t, rtol=1e-6, atol=1e-9)

    def test_boundary_probability_rejected(self):
        d = RawDetection(Box(16.0, 16.0, 10.0, 20.0, PIXEL_NETWORK), 1.0, (0.5,), 0, (0, 0), 0)
        with pytest.raises(EncodeError):
            encode_cell(d, AnchorBox(10, 20), 32)
        d = RawDetection(Box(16.0, 16.0, 10.0, 20.0, PIXEL_NETWORK), 0.5, (0.0,), 0, (0, 0), 0)
        with pytest.raises(EncodeError):
            encode_cell(d, AnchorBox(10, 20), 32)

    def test_center_on_cell_boundary_rejected(self):
        d = RawDetection(Box(32.0, 16.0, 10.0, 20.0, PIXEL_NETWORK), 0.5, (0.5,), 0, (0, 0), 0)
        with pytest.raises(EncodeError):
            encode_cell(d, AnchorBox(10, 20), 32)


def test_sigmoid_symmetry_and_bounds():
    rng = np.random.default_rng(13)
    for x in rng.uniform(-30, 30, 1000):
        assert sigmoid(x) + sigmoid(-x) == pytest.approx(1.0, abs=1e-12)
    assert sigmoid(0.0) == 0.5
