# tests/test_degradation.py
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.autodiff import Tensor
from core.degradation import (
    MAX_SEQUENCE_LENGTH,
    DegradationParams,
    SequenceSample,
    add_noise,
    crop_offset,
    degrade_frame,
    downsample,
    gaussian_blur,
    gaussian_kernel,
    make_lr_sequence,
    noise_field,
    random_crop_sequence,
)
from core.errors import ConfigError, GeometryError, ShapeError
from core.metrics import bicubic_resize, psnr


def test_gaussian_kernel_radius_and_normalization():
    k = gaussian_kernel(1.0)
    assert k.size == 7
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert_array_equal(k, k[::-1])
    assert gaussian_kernel(0.4).size == 5
    assert_array_equal(gaussian_kernel(0.0), [1.0])


def test_blur_with_zero_sigma_is_identity(rng):
    img = rng.uniform(size=(9, 7)).astype(np.float32)
    assert_array_equal(gaussian_blur(img, 0.0).data, img)


def test_blur_preserves_constant_image():
    img = np.full((16, 16), 0.4)
    assert_allclose(gaussian_blur(img, 1.0).data, 0.4, atol=1e-12)


def test_blur_impulse_response():
    img = np.zeros((15, 15))
    img[7, 7] = 1.0
    out = gaussian_blur(img, 1.0).data
    k = gaussian_kernel(1.0)
    assert out[7, 7] == pytest.approx(k[3] ** 2, rel=1e-12)
    assert out.sum() == pytest.approx(1.0, rel=1e-12)
    assert_allclose(out[4:11, 4:11], np.outer(k, k), rtol=1e-12)


def test_downsample_box_mean(rng):
    assert_array_equal(downsample(np.array([[1.0, 2.0], [3.0, 4.0]]), 2).data, [[2.5]])
    img = rng.uniform(size=(8, 12))
    out = downsample(img, 4).data
    expected = np.array([[img[4 * i:4 * i + 4, 4 * j:4 * j + 4].mean() for j in range(3)] for i in range(2)])
    assert_allclose(out, expected, rtol=1e-12)
    with pytest.raises(GeometryError):
        downsample(np.zeros((6, 6)), 4)


def test_noise_is_seeded_and_clamped():
    img = np.full((32, 32), 0.5)
    assert_array_equal(add_noise(img, 0.0, seed=1).data, img)
    assert_array_equal(add_noise(img, 0.05, seed=3).data, add_noise(img, 0.05, seed=3).data)
    assert not np.array_equal(add_noise(img, 0.05, seed=3).data, add_noise(img, 0.05, seed=4).data)
    bright = add_noise(np.ones((32, 32)), 0.5, seed=0).data
    assert bright.max() <= 1.0 and bright.min() >= 0.0


def test_noise_field_statistics():
    n, sigma = 1_000_000, 0.01
    field = noise_field((n,), sigma, seed=2024)
    assert abs(field.mean()) < 3 * sigma / np.sqrt(n)
    assert abs(field.std() - sigma) < 0.01 * sigma


def test_psnr_falls_as_noise_grows():
    img = np.full((64, 64), 0.5)
    scores = [psnr(add_noise(img, sigma, seed=11), img) for sigma in (0.01, 0.02, 0.05)]
    assert scores[0] > scores[1] > scores[2]
    assert scores[0] == pytest.approx(40.0, abs=0.5)


@pytest.mark.parametrize("scale", [2, 4])
def test_bicubic_up_then_box_down_keeps_constant(scale):
    img = np.full((1, 1, 12, 12), 0.63)
    restored = downsample(bicubic_resize(img, scale, "up"), scale)
    assert restored.shape == img.shape
    assert_allclose(restored.data, 0.63, atol=1e-12)



def test_crop_shares_one_offset_across_frames():
    h, w = 20, 24
    code = np.arange(h * w, dtype=np.float64).reshape(h, w)
    frames = [code + 10_000 * t for t in range(5)]
    crops = random_crop_sequence(frames, 8, seed=17)
    top, left = crop_offset((h, w), 8, seed=17)
    for t, crop in enumerate(crops):
        assert crop.shape == (8, 8)
        assert crop.data[0, 0] == top * w + left + 10_000 * t
        assert_array_equal(crop.data - 10_000 * t, crops[0].data)


def test_crop_edge_cases():
    frames = [np.ones((8, 8)), np.zeros((8, 8))]
    full = random_crop_sequence(frames, 8, seed=0)
    assert_array_equal(full[0].data, frames[0])
    assert random_crop_sequence([], 4, seed=0) == []
    with pytest.raises(GeometryError):
        random_crop_sequence(frames, 9, seed=0)
    with pytest.raises(ShapeError):
        random_crop_sequence([np.ones((8, 8)), np.ones((8, 6))], 4, seed=0)


def test_make_lr_sequence_composition(rng):
    hr = [rng.uniform(size=(1, 1, 128, 128)).astype(np.float32) for _ in range(3)]
    clean = DegradationParams(scale=4, blur_sigma=1.0, noise_sigma=0.0, seed=5)
    sample = make_lr_sequence(hr, clean)
    assert len(sample) == 3
    for frame, lr in zip(hr, sample.lr_frames):
        assert lr.shape == (1, 1, 32, 32)
        assert_array_equal(lr.data, downsample(gaussian_blur(frame, 1.0), 4).data)

    noisy = DegradationParams(scale=4, noise_sigma=0.01, seed=5)
    first, second = make_lr_sequence(hr, noisy), make_lr_sequence(hr, noisy)
    for i, (a, b) in enumerate(zip(first.lr_frames, second.lr_frames)):
        assert_array_equal(a.data, b.data)
        assert_array_equal(a.data, degrade_frame(hr[i], noisy, 5 + i).data)


def test_constant_frame_keeps_its_level():
    hr = [np.full((1, 1, 64, 64), 0.5)]
    sample = make_lr_sequence(hr, DegradationParams(scale=2, blur_sigma=1.5, noise_sigma=0.0))
    assert_allclose(sample.lr_frames[0].data, 0.5, atol=1e-12)


def test_sample_and_params_validation():
    with pytest.raises(ConfigError):
        DegradationParams(scale=3)
    with pytest.raises(ConfigError):
        DegradationParams(noise_sigma=-1.0)
    with pytest.raises(ShapeError):
        SequenceSample([Tensor(np.zeros((8, 8)))], [Tensor(np.zeros((3, 3)))], DegradationParams(scale=2))
    with pytest.raises(ShapeError):
        SequenceSample([], [], DegradationParams())


def test_sample_length_is_capped():
    frames = [Tensor(np.zeros((8, 8))) for _ in range(MAX_SEQUENCE_LENGTH + 1)]
    lows = [Tensor(np.zeros((4, 4))) for _ in frames]
    params = DegradationParams(scale=2)
    assert len(SequenceSample(frames[:MAX_SEQUENCE_LENGTH], lows[:MAX_SEQUENCE_LENGTH], params)) == 10
    with pytest.raises(ShapeError):
        SequenceSample(frames, lows, params)
    with pytest.raises(ShapeError):
        make_lr_sequence([np.zeros((8, 8))] * 11, params)
