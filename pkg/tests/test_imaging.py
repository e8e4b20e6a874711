"""Imaging transform tests against independently coded pixel oracles."""

import math

import numpy as np
import pytest

from instrumentqc.imaging import (
    NormalizedTensor,
    PixelRegion,
    RasterImage,
    add_noise,
    adjust,
    crop,
    decode_png,
    denoise,
    encode_png,
    normalize,
    resize_bilinear,
    transform_geometric,
    unsharp_mask,
)


def random_image(rng, h=None, w=None, channels=3):
    h = h or int(rng.integers(2, 12))
    w = w or int(rng.integers(2, 12))
    return RasterImage(rng.integers(0, 256, size=(h, w, channels), dtype=np.uint8))


# ---------------------------------------------------------------------------
# Reference oracles: straightforward nested-loop implementations, written
# independently of the vectorized code under test.
# ---------------------------------------------------------------------------

def _round_half_away(v):
    return math.copysign(math.floor(abs(v) + 0.5), v)


def _clamp8(v):
    return int(min(max(v, 0), 255))


def oracle_unsharp(pixels, sigma, amount):
    """Direct 2-D Gaussian-product convolution, clamp-to-edge, then sharpen."""
    h, w, c = pixels.shape
    r = math.ceil(3.0 * sigma)
    taps = [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-r, r + 1)]
    norm = sum(taps)
    taps = [t / norm for t in taps]
    out = np.zeros_like(pixels)
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                blur = 0.0
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        yy = min(max(y + dy, 0), h - 1)
                        xx = min(max(x + dx, 0), w - 1)
                        blur += taps[dy + r] * taps[dx + r] * float(pixels[yy, xx, ch])
                val = float(pixels[y, x, ch])
                out[y, x, ch] = _clamp8(_round_half_away(val + amount * (val - blur)))
    return out


def oracle_resize(pixels, out_w, out_h):
    h, w, c = pixels.shape
    out = np.zeros((out_h, out_w, c), dtype=np.uint8)
    for dy in range(out_h):
        sy = (dy + 0.5) * (h / out_h) - 0.5
        y0 = math.floor(sy)
        fy = sy - y0
        y0c, y1c = min(max(y0, 0), h - 1), min(max(y0 + 1, 0), h - 1)
        for dx in range(out_w):
            sx = (dx + 0.5) * (w / out_w) - 0.5
            x0 = math.floor(sx)
            fx = sx - x0
            x0c, x1c = min(max(x0, 0), w - 1), min(max(x0 + 1, 0), w - 1)
            for ch in range(c):
                top = pixels[y0c, x0c, ch] * (1 - fx) + pixels[y0c, x1c, ch] * fx
                bot = pixels[y1c, x0c, ch] * (1 - fx) + pixels[y1c, x1c, ch] * fx
                out[dy, dx, ch] = _clamp8(_round_half_away(top * (1 - fy) + bot * fy))
    return out


def oracle_median3(pixels):
    h, w, c = pixels.shape
    out = np.zeros_like(pixels)
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                window = sorted(
                    pixels[min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1), ch]
                    for dy in (-1, 0, 1)
                    for dx in (-1, 0, 1)
                )
                out[y, x, ch] = window[4]
    return out


# ---------------------------------------------------------------------------
# unsharp_mask
# ---------------------------------------------------------------------------

def test_unsharp_constant_image_unchanged():
    img = RasterImage(np.full((6, 5, 3), 77, dtype=np.uint8))
    for sigma, amount in [(0.5, 1.0), (1.0, 2.5), (3.0, 0.3)]:
        assert unsharp_mask(img, sigma, amount).same_pixels(img)


def test_unsharp_amount_zero_is_identity():
    rng = np.random.default_rng(11)
    img = random_image(rng)
    assert unsharp_mask(img, sigma=1.0, amount=0.0).same_pixels(img)


def test_unsharp_step_row_matches_oracle():
    row = np.array([[0, 0, 0, 255, 255, 255, 255]], dtype=np.uint8)[:, :, np.newaxis]
    img = RasterImage(row)
    result = unsharp_mask(img, sigma=1.0, amount=1.0)
    # hard step saturates under clamping: frozen oracle output equals the input
    expected = [0, 0, 0, 255, 255, 255, 255]
    assert result.pixels[0, :, 0].tolist() == expected
    assert np.array_equal(result.pixels, oracle_unsharp(row, 1.0, 1.0))


def test_unsharp_random_images_match_oracle():
    rng = np.random.default_rng(7)
    for sigma, amount in [(0.6, 1.0), (1.0, 0.5), (1.4, 1.5)]:
        img = random_image(rng, h=5, w=6)
        got = unsharp_mask(img, sigma, amount)
        assert np.array_equal(got.pixels, oracle_unsharp(img.pixels, sigma, amount))


def test_unsharp_rejects_non_positive_sigma():
    img = RasterImage(np.zeros((2, 2, 1), dtype=np.uint8))
    with pytest.raises(ValueError):
        unsharp_mask(img, sigma=0.0)
    with pytest.raises(ValueError):
        unsharp_mask(img, sigma=-1.0)


# ---------------------------------------------------------------------------
# resize_bilinear
# ---------------------------------------------------------------------------

def test_resize_constant_1600_to_1024():
    img = RasterImage(np.full((1600, 1600, 1), 200, dtype=np.uint8))
    out = resize_bilinear(img, 1024, 1024)
    assert (out.width, out.height) == (1024, 1024)
    assert np.all(out.pixels == 200)


def test_resize_same_dims_is_identity():
    rng = np.random.default_rng(23)
    img = random_image(rng, h=9, w=7)
    assert resize_bilinear(img, 7, 9).same_pixels(img)


def test_resize_gradient_matches_oracle():
    gradient = np.array(
        [[(r * 4 + c) * 16 for c in range(4)] for r in range(4)], dtype=np.uint8
    )[:, :, np.newaxis]
    out = resize_bilinear(RasterImage(gradient), 2, 2)
    assert out.pixels[:, :, 0].tolist() == [[40, 72], [168, 200]]
    assert np.array_equal(out.pixels, oracle_resize(gradient, 2, 2))


def test_resize_random_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        img = random_image(rng)
        out_w, out_h = int(rng.integers(1, 15)), int(rng.integers(1, 15))
        got = resize_bilinear(img, out_w, out_h)
        assert np.array_equal(got.pixels, oracle_resize(img.pixels, out_w, out_h))


def test_resize_rejects_zero_target():
    img = RasterImage(np.zeros((2, 2, 1), dtype=np.uint8))
    with pytest.raises(ValueError):
        resize_bilinear(img, 0, 4)
    with pytest.raises(ValueError):
        resize_bilinear(img, 4, 0)


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------

def test_normalize_endpoints_and_midpoint():
    img = RasterImage(np.array([[[0], [255], [51]]], dtype=np.uint8))
    tensor = normalize(img)
    assert tensor.values[0, 0, 0] == 0.0
    assert tensor.values[0, 1, 0] == 1.0
    assert tensor.values[0, 2, 0] == 0.2


def test_normalize_is_monotone():
    img = RasterImage(np.arange(256, dtype=np.uint8).reshape(16, 16, 1))
    vals = normalize(img).values.ravel()
    assert np.all(np.diff(vals) > 0)


# ---------------------------------------------------------------------------
# adjust
# ---------------------------------------------------------------------------

def test_adjust_brightness_clamps():
    img = RasterImage(np.full((1, 1, 1), 250, dtype=np.uint8))
    assert adjust(img, "brightness", 20).pixels[0, 0, 0] == 255


def test_adjust_contrast_fixed_point_at_128():
    img = RasterImage(np.full((2, 2, 3), 128, dtype=np.uint8))
    for delta in (-20, -3, 7, 20):
        assert adjust(img, "contrast", delta).same_pixels(img)


def test_adjust_saturation_gray_fixed_point():
    img = RasterImage(np.full((2, 2, 3), 90, dtype=np.uint8))
    assert adjust(img, "saturation", 20).same_pixels(img)


def test_adjust_zero_delta_is_identity_for_all_kinds():
    rng = np.random.default_rng(31)
    img = random_image(rng)
    for kind in ("brightness", "contrast", "saturation", "sharpness"):
        assert adjust(img, kind, 0).same_pixels(img)


def test_adjust_brightness_roundtrip_differs_only_at_clamped_samples():
    rng = np.random.default_rng(37)
    img = random_image(rng, h=16, w=16)
    up_down = adjust(adjust(img, "brightness", 7), "brightness", -7)
    clamped = img.pixels.astype(int) + 7 > 255
    assert np.array_equal(up_down.pixels[~clamped], img.pixels[~clamped])


def test_adjust_rejects_out_of_range_delta():
    img = RasterImage(np.zeros((1, 1, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        adjust(img, "brightness", 21)
    with pytest.raises(ValueError):
        adjust(img, "contrast", -21)


def test_adjust_saturation_requires_rgb():
    img = RasterImage(np.zeros((2, 2, 1), dtype=np.uint8))
    with pytest.raises(ValueError):
        adjust(img, "saturation", 10)


# ---------------------------------------------------------------------------
# add_noise
# ---------------------------------------------------------------------------

def test_add_noise_zero_sigma_unchanged():
    rng = np.random.default_rng(41)
    img = random_image(rng)
    assert add_noise(img, 0.0, seed=99).same_pixels(img)


def test_add_noise_is_deterministic_per_seed():
    rng = np.random.default_rng(43)
    img = random_image(rng, h=8, w=8)
    a = add_noise(img, 5.0, seed=1234)
    b = add_noise(img, 5.0, seed=1234)
    c = add_noise(img, 5.0, seed=1235)
    assert a.same_pixels(b)
    assert not a.same_pixels(c)


def test_add_noise_empirical_sigma():
    img = RasterImage(np.full((512, 512, 1), 128, dtype=np.uint8))
    noisy = add_noise(img, 10.0, seed=7)
    deviation = noisy.pixels.astype(np.float64) - 128.0
    assert abs(deviation.std() - 10.0) / 10.0 < 0.05


# ---------------------------------------------------------------------------
# denoise
# ---------------------------------------------------------------------------

def test_denoise_constant_unchanged():
    img = RasterImage(np.full((5, 5, 3), 42, dtype=np.uint8))
    assert denoise(img).same_pixels(img)


def test_denoise_removes_salt_pixel():
    px = np.zeros((5, 5, 1), dtype=np.uint8)
    px[2, 2, 0] = 255
    out = denoise(RasterImage(px))
    assert out.pixels[2, 2, 0] == 0


def test_denoise_random_matches_oracle():
    rng = np.random.default_rng(53)
    img = random_image(rng, h=9, w=9)
    assert np.array_equal(denoise(img).pixels, oracle_median3(img.pixels))


# ---------------------------------------------------------------------------
# transform_geometric / crop
# ---------------------------------------------------------------------------

def test_rot90_clockwise_index_identity():
    px = np.array([[1, 2], [3, 4]], dtype=np.uint8)[:, :, np.newaxis]
    out = transform_geometric(RasterImage(px), "rot90")
    assert out.pixels[:, :, 0].tolist() == [[3, 1], [4, 2]]


def test_rot90_swaps_dimensions():
    rng = np.random.default_rng(59)
    img = random_image(rng, h=3, w=5)
    out = transform_geometric(img, "rot90")
    assert (out.width, out.height) == (3, 5)


def test_geometric_group_identities():
    rng = np.random.default_rng(61)
    for _ in range(10):
        img = random_image(rng)
        r = img
        for _ in range(4):
            r = transform_geometric(r, "rot90")
        assert r.same_pixels(img)
        assert transform_geometric(
            transform_geometric(img, "flip_h"), "flip_h"
        ).same_pixels(img)
        assert transform_geometric(
            transform_geometric(img, "flip_v"), "flip_v"
        ).same_pixels(img)
        assert transform_geometric(
            transform_geometric(img, "rot180"), "rot180"
        ).same_pixels(img)
        via_flips = transform_geometric(transform_geometric(img, "flip_h"), "flip_v")
        assert transform_geometric(img, "rot180").same_pixels(via_flips)


def test_crop_full_image_identity():
    rng = np.random.default_rng(67)
    img = random_image(rng, h=4, w=6)
    assert crop(img, PixelRegion(0, 0, 6, 4)).same_pixels(img)


def test_crop_single_pixel():
    px = np.array([[1, 2], [3, 4]], dtype=np.uint8)[:, :, np.newaxis]
    out = crop(RasterImage(px), PixelRegion(1, 1, 1, 1))
    assert out.pixels[:, :, 0].tolist() == [[4]]


def test_crop_out_of_bounds_raises():
    img = RasterImage(np.zeros((4, 4, 1), dtype=np.uint8))
    with pytest.raises(ValueError):
        crop(img, PixelRegion(2, 0, 3, 2))


# ---------------------------------------------------------------------------
# type invariants and purity
# ---------------------------------------------------------------------------

def test_all_ops_preserve_image_invariants():
    rng = np.random.default_rng(71)
    for _ in range(10):
        img = random_image(rng)
        outputs = [
            unsharp_mask(img, 1.0, 1.0),
            resize_bilinear(img, 5, 5),
            adjust(img, "contrast", 15),
            add_noise(img, 4.0, seed=3),
            denoise(img),
            transform_geometric(img, "rot270"),
            crop(img, PixelRegion(0, 0, img.width, img.height)),
        ]
        for out in outputs:
            assert out.pixels.dtype == np.uint8
            assert out.pixels.shape[2] == img.channels
            assert out.pixels.size == out.width * out.height * out.channels


def test_images_are_immutable():
    img = RasterImage(np.zeros((2, 2, 1), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1


def test_raster_image_rejects_bad_shapes():
    with pytest.raises(ValueError):
        RasterImage(np.zeros((2, 2, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        RasterImage(np.zeros((0, 2, 1), dtype=np.uint8))


def test_normalized_tensor_rejects_out_of_range():
    with pytest.raises(ValueError):
        NormalizedTensor(np.full((1, 1, 1), 1.5))


# ---------------------------------------------------------------------------
# PNG round trip
# ---------------------------------------------------------------------------

def test_png_roundtrip_rgb_and_grayscale():
    rng = np.random.default_rng(73)
    for channels in (1, 3):
        img = random_image(rng, h=11, w=13, channels=channels)
        again = decode_png(encode_png(img))
        assert again.same_pixels(img)


def test_decode_rejects_garbage():
    with pytest.raises(ValueError):
        decode_png(b"definitely not a png")
