import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmk.imaging import (GrayImage, InvalidParameterError, NormLocation, PGMError, Region, binary_test,
                         encode_pgm, parse_pgm, pixel_coords, read_pgm, round_half_away, sample_pixel,
                         shrink_recenter, write_pgm)


def gradient_image(w=20, h=20):
    # intensity encodes position: unique value per pixel for small images
    return GrayImage((np.arange(w * h) % 256).reshape(h, w).astype(np.uint8))


@pytest.mark.parametrize("x, expected", [
    (0.5, 1), (-0.5, -1), (1.5, 2), (2.5, 3), (-2.5, -3), (0.49999999999999994, 0), (-0.4, 0), (3.0, 3),
])
def test_round_half_away(x, expected):
    assert round_half_away(x) == expected


def test_sample_center_is_region_center():
    img = gradient_image()
    assert sample_pixel(img, Region(10, 10, 6), NormLocation(0, 0)) == img.pixel(10, 10)


def test_sample_corner_maps_to_origin():
    img = gradient_image()
    # 5 + (-1) * 10 / 2 = 0
    assert pixel_coords(img, Region(5, 5, 10), -1, -1) == (0, 0)
    assert sample_pixel(img, Region(5, 5, 10), (-1, -1)) == img.pixel(0, 0)


def test_sample_clamps_past_border():
    img = gradient_image(20, 15)
    assert sample_pixel(img, Region(18, 13, 40), (1, 1)) == img.pixel(19, 14)
    assert pixel_coords(img, Region(-100, -100, 4), 0, 0) == (0, 0)


def test_u_is_column_v_is_row():
    img = gradient_image()
    assert pixel_coords(img, Region(10, 10, 8), 0.5, 0) == (12, 10)
    assert pixel_coords(img, Region(10, 10, 8), 0, 0.5) == (10, 12)


def test_binary_test_cases():
    pixels = np.zeros((4, 4), np.uint8)
    pixels[1, 1] = 10
    pixels[1, 3] = 20
    pixels[3, 1] = 200
    pixels[3, 3] = 100
    img = GrayImage(pixels)
    r = Region(2, 2, 4)
    l_a, l_b, l_c, l_d = (-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)
    assert binary_test(img, r, l_a, l_b) == 0  # 10 <= 20
    assert binary_test(img, r, l_c, l_d) == 1  # 200 > 100
    assert binary_test(img, r, l_c, l_c) == 0


def test_shrink_recenter():
    r = Region(0, 0, 100)
    assert shrink_recenter(r, (3, 4), 0.7) == Region(3, 4, 100 * 0.7)
    assert shrink_recenter(r, (3, 4), 0.7).size == pytest.approx(70)
    assert shrink_recenter(shrink_recenter(r, (0, 0), 0.7), (0, 0), 0.7).size == pytest.approx(49)
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(InvalidParameterError):
            shrink_recenter(r, (0, 0), bad)


@given(st.floats(0.01, 1e6, allow_nan=False))
def test_shrink_identity_is_bit_exact(size):
    assert shrink_recenter(Region(1.5, 2.5, size), (7, 8), 1.0).size == size


def test_region_and_image_validation():
    with pytest.raises(InvalidParameterError):
        Region(0, 0, 0)
    with pytest.raises(InvalidParameterError):
        Region(0, 0, -3)
    with pytest.raises(InvalidParameterError):
        GrayImage.from_bytes(3, 3, b"\x00" * 8)
    with pytest.raises(InvalidParameterError):
        GrayImage(np.full((2, 2), 300))
    with pytest.raises(InvalidParameterError):
        NormLocation.checked(1.2, 0)
    assert GrayImage.from_bytes(3, 2, bytes(range(6))).pixel(2, 1) == 5


finite = st.floats(-1e9, 1e9, allow_nan=False)
unit = st.floats(-1.0, 1.0)


@settings(max_examples=300)
@given(finite, finite, st.floats(1e-6, 1e9), unit, unit)
def test_sampling_is_total(cx, cy, size, u, v):
    img = gradient_image(7, 5)
    value = sample_pixel(img, Region(cx, cy, size), (u, v))
    assert 0 <= value <= 255
    x, y = pixel_coords(img, Region(cx, cy, size), u, v)
    assert 0 <= x < 7 and 0 <= y < 5


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), unit, unit, unit, unit)
def test_binary_test_antisymmetric(seed, a, b, c, d):
    img = GrayImage(np.random.default_rng(seed).integers(0, 256, (16, 16), dtype=np.uint8))
    r = Region(8, 8, 14)
    i1, i2 = sample_pixel(img, r, (a, b)), sample_pixel(img, r, (c, d))
    if i1 != i2:
        assert binary_test(img, r, (a, b), (c, d)) != binary_test(img, r, (c, d), (a, b))


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(-4, 20), st.integers(-4, 20), st.integers(1, 20),
       *[st.integers(-16, 16)] * 4)
def test_binary_test_invariant_under_integer_upscaling(seed, cx, cy, half, a, b, c, d):
    img = GrayImage(np.random.default_rng(seed).integers(0, 256, (16, 16), dtype=np.uint8))
    big = GrayImage(np.repeat(np.repeat(img.pixels, 2, axis=0), 2, axis=1))
    l1, l2 = (a / 16, b / 16), (c / 16, d / 16)
    small_r = Region(cx, cy, 2 * half)
    # pixel i of the original covers pixels 2i, 2i+1 (centered at 2i + 0.5) of the upscaled image
    big_r = Region(2 * cx + 0.5, 2 * cy + 0.5, 4 * half)
    assert binary_test(img, small_r, l1, l2) == binary_test(big, big_r, l1, l2)


def test_pgm_round_trip(tmp_path, rng):
    img = GrayImage(rng.integers(0, 256, (7, 11), dtype=np.uint8))
    write_pgm(tmp_path / "a.pgm", img)
    assert read_pgm(tmp_path / "a.pgm") == img


def test_pgm_header_comments_and_raster_starting_with_whitespace():
    data = b"P5\n# made by hand\n3 2\n# another\n255\n" + bytes([32, 10, 9, 0, 255, 13])
    img = parse_pgm(data)
    assert (img.width, img.height) == (3, 2)
    assert img.pixels.ravel().tolist() == [32, 10, 9, 0, 255, 13]
    assert parse_pgm(encode_pgm(img)) == img


@pytest.mark.parametrize("data, message", [
    (b"P2\n2 2\n255\n0 0 0 0", "only binary PGM"),
    (b"P6\n1 1\n255\nabc", "only binary PGM"),
    (b"P5\n2 2\n65535\n" + b"\0" * 8, "maxval"),
    (b"P5\n2 2\n255\n\0\0\0", "expected 4 pixel bytes"),
    (b"P5\n2", "truncated"),
    (b"P5\nx 2\n255\n\0\0", "malformed"),
])
def test_pgm_rejects(data, message):
    with pytest.raises(PGMError, match=message):
        parse_pgm(data)


def test_mirrored_image_is_involution(rng):
    img = GrayImage(rng.integers(0, 256, (5, 9), dtype=np.uint8))
    assert img.mirrored().pixel(0, 2) == img.pixel(8, 2)
    assert img.mirrored().mirrored() == img
