import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rowtracker.errors import DimensionMismatch
from rowtracker.masks import Mask, closing, disk, mask_iou, rle_decode, rle_encode

bit_images = st.integers(1, 12).flatmap(
    lambda h: st.integers(1, 12).flatmap(lambda w: arrays(bool, (h, w)))
)


def square(w, h, top, left, size):
    bits = np.zeros((h, w), dtype=bool)
    bits[top:top + size, left:left + size] = True
    return Mask.from_array(bits)


def test_bits_roundtrip_and_tight_crop():
    bits = np.zeros((6, 8), dtype=bool)
    bits[2:4, 3:6] = True
    m = Mask.from_array(bits)
    assert m.bbox == (2, 3, 4, 6)
    assert m.area == 6
    assert np.array_equal(m.bits, bits)
    assert m.centroid == (4.0, 2.5)


def test_empty_mask():
    m = Mask(10, 5)
    assert m.empty and m.area == 0 and m.centroid is None
    assert m.bits.shape == (5, 10) and not m.bits.any()
    assert Mask.from_array(np.zeros((5, 10))) == m


def test_crop_outside_image_is_rejected():
    with pytest.raises(DimensionMismatch):
        Mask(10, 10, np.ones((3, 3)), top=8, left=0)


def test_mask_is_immutable_copy():
    bits = np.zeros((4, 4), dtype=bool)
    bits[1, 1] = True
    m = Mask.from_array(bits)
    bits[1, 1] = False
    assert m.area == 1
    with pytest.raises(ValueError):
        m.crop[0, 0] = False


def test_iou_examples():
    a = square(40, 40, 5, 5, 10)
    b = square(40, 40, 5, 10, 10)
    assert mask_iou(a, a) == 1.0
    assert mask_iou(a, square(40, 40, 25, 25, 10)) == 0.0
    assert mask_iou(a, b) == pytest.approx(50 / 150)
    assert mask_iou(Mask(40, 40), Mask(40, 40)) == 0.0
    with pytest.raises(DimensionMismatch):
        mask_iou(a, square(30, 40, 5, 5, 10))


@given(bit_images, st.data())
def test_iou_matches_full_image_oracle(a_bits, data):
    b_bits = data.draw(arrays(bool, a_bits.shape))
    inter = np.count_nonzero(a_bits & b_bits)
    union = np.count_nonzero(a_bits | b_bits)
    expected = inter / union if union else 0.0
    got = mask_iou(Mask.from_array(a_bits), Mask.from_array(b_bits))
    assert got == pytest.approx(expected, abs=1e-15)
    assert 0.0 <= got <= 1.0


def test_rle_example():
    bits = np.array([[0, 1, 1], [1, 0, 0]], dtype=bool)
    m = Mask.from_array(bits)
    assert rle_encode(m) == [1, 3, 2]
    assert rle_encode(Mask(3, 2)) == [6]
    assert rle_encode(Mask.from_array(np.ones((2, 2)))) == [0, 4]


@given(bit_images)
def test_rle_roundtrip(bits):
    m = Mask.from_array(bits)
    runs = rle_encode(m)
    assert sum(runs) == bits.size
    assert all(r > 0 for r in runs[1:])
    assert rle_decode(runs, bits.shape[1], bits.shape[0]) == m


def test_rle_decode_rejects_bad_lengths():
    with pytest.raises(DimensionMismatch):
        rle_decode([1, 2], 3, 2)
    with pytest.raises(ValueError):
        rle_decode([7, -1], 3, 2)


def test_sample_row_major_order():
    img = np.arange(20.0).reshape(4, 5)
    m = Mask.from_pixels(5, 4, [4, 1, 2], [0, 2, 2])
    assert m.sample(img).tolist() == [4.0, 11.0, 12.0]
    with pytest.raises(DimensionMismatch):
        m.sample(np.zeros((5, 5)))


def test_morph_dilate_erode():
    m = square(20, 20, 5, 5, 5)
    assert m.morph(1).area == 49
    assert m.morph(-1).area == 9
    assert m.morph(-3).empty
    assert m.morph(0) is m
    # dilation is clipped at the image border
    corner = square(20, 20, 0, 0, 2)
    assert corner.morph(1).area == 9


def test_closing_fills_gap_and_keeps_border():
    bits = np.zeros((10, 10), dtype=bool)
    bits[0:4, 0:3] = True
    bits[0:4, 4:7] = True  # one-column gap at u = 3
    out = closing(Mask.from_array(bits))
    assert out.bits[0:4, 0:7].all()
    assert out.bbox == (0, 0, 4, 7)


def test_disk_area_and_clipping():
    d = disk(200, 200, 100.0, 100.0, 20.0)
    assert d.area == pytest.approx(np.pi * 400, rel=0.02)
    assert d.centroid == pytest.approx((100.0, 100.0))
    edge = disk(200, 200, 0.0, 100.0, 20.0)
    assert edge.bbox[1] == 0
    assert disk(200, 200, -50.0, -50.0, 5.0).empty
