from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelsr import degrade as dg
from kernelsr.errors import FormatError, ImageIOError, ParameterError
from kernelsr.kernelest import GaussianKernelParams, make_gaussian_kernel


def _index(i: int, n: int, boundary: str) -> int | None:
    if 0 <= i < n:
        return i
    if boundary == "zero":
        return None
    if boundary == "replicate":
        return min(max(i, 0), n - 1)
    # half-sample symmetric: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    period = 2 * n
    i %= period
    return i if i < n else period - 1 - i


def naive_correlate(img: np.ndarray, k: np.ndarray, boundary: str) -> np.ndarray:
    h, w = img.shape
    r = k.shape[0] // 2
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = _index(y + dy, h, boundary), _index(x + dx, w, boundary)
                    if yy is None or xx is None:
                        continue
                    acc += k[dy + r, dx + r] * img[yy, xx]
            out[y, x] = acc
    return out


def random_kernel(rng, size):
    k = rng.random((size, size))
    return k / k.sum()


def test_delta_is_identity(rng):
    img = rng.random((3, 17, 13))
    np.testing.assert_array_equal(dg.convolve(img, dg.delta_kernel(33)), img)


def test_constant_preserved(rng):
    k = random_kernel(rng, 9)
    out = dg.convolve(np.full((12, 10), 0.3), k, "reflect")
    np.testing.assert_allclose(out, 0.3, atol=1e-14)


def test_mean_kernel_center_value():
    img = np.arange(9, dtype=float).reshape(3, 3) / 8
    out = dg.convolve(img, np.full((3, 3), 1 / 9), "zero")
    assert out[1, 1] == pytest.approx(36 / 72, abs=1e-15)


@pytest.mark.parametrize("boundary", dg.BOUNDARIES)
@pytest.mark.parametrize("size", [3, 7, 15])
def test_convolve_matches_naive(rng, boundary, size):
    img = rng.random((11, 14))
    k = random_kernel(rng, size)
    np.testing.assert_allclose(dg.convolve(img, k, boundary), naive_correlate(img, k, boundary),
                               atol=1e-12)


def test_correlation_not_flipped():
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    k = np.zeros((3, 3))
    k[0, 2] = 1.0
    out = dg.convolve(img, k, "zero")
    # out[y, x] = img[y-1, x+1], so the impulse lands at (4, 2)
    assert out[4, 2] == 1.0 and out.sum() == 1.0


def test_convolve_rejects_bad_kernels():
    with pytest.raises(ParameterError):
        dg.convolve(np.zeros((5, 5)), np.ones((2, 2)) / 4)
    with pytest.raises(ParameterError):
        dg.convolve(np.zeros((5, 5)), np.ones((3, 3)))
    k = np.full((3, 3), 1 / 9)
    k[0, 0] = -0.1
    with pytest.raises(ParameterError):
        dg.convolve(np.zeros((5, 5)), k / k.sum())


def test_downsample_examples(rng):
    img = rng.random((4, 4))
    np.testing.assert_array_equal(dg.downsample(img, 1), img)
    np.testing.assert_array_equal(dg.downsample(img, 2), img[[0, 2]][:, [0, 2]])
    assert dg.downsample(np.zeros((64, 64)), 4).shape == (16, 16)
    assert dg.downsample(np.zeros((3, 9, 7)), 2).shape == (3, 4, 3)
    with pytest.raises(ParameterError):
        dg.downsample(img, 0)


def test_degrade_examples(rng, texture):
    hr = texture(64, 1)
    np.testing.assert_array_equal(dg.degrade(hr, dg.delta_kernel(5), 1), hr)
    k = make_gaussian_kernel(GaussianKernelParams(2.0, 1.0, 0.3), 33)
    const = dg.degrade(np.full((40, 40), 0.7), k, 2)
    assert const.shape == (20, 20)
    np.testing.assert_allclose(const, 0.7, atol=1e-13)
    bank = dg.NoiseBank(8, [rng.standard_normal((8, 8)) * 0.01 for _ in range(5)])
    a, b = dg.degrade(hr, k, 2, bank, seed=3), dg.degrade(hr, k, 2, bank, seed=3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, dg.degrade(hr, k, 2, bank, seed=4))


def test_degrade_noise_too_large():
    bank = dg.NoiseBank(32, [np.zeros((32, 32))])
    with pytest.raises(ParameterError):
        dg.degrade(np.zeros((40, 40)), dg.delta_kernel(3), 2, bank)


def test_empty_bank_is_plain_blur_downsample(texture):
    hr = texture(48, 2)
    k = make_gaussian_kernel(GaussianKernelParams(1.3, 1.3, 0.0), 15)
    np.testing.assert_array_equal(dg.degrade(hr, k, 2, dg.NoiseBank()),
                                  np.clip(dg.blur_downsample(hr, k, 2), 0, 1))


def test_noise_tile_mean_bound(rng):
    hr = np.full((64, 64), 0.5)
    patches = [p - p.mean() for p in (rng.standard_normal((8, 8)) * 0.02 for _ in range(4))]
    bank = dg.NoiseBank(8, patches)
    lr = dg.degrade(hr, dg.delta_kernel(1), 2, bank, seed=0)
    bound = max(np.abs(p).max() for p in patches)
    for y in range(0, 32, 8):
        for x in range(0, 32, 8):
            assert abs(lr[y:y + 8, x:x + 8].mean() - 0.5) <= bound + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 0.5), st.floats(0, 0.5), st.integers(0, 2**16))
def test_linearity_pre_clamp(a, b, seed):
    g = np.random.default_rng(seed)
    x, z = g.random((20, 18)), g.random((20, 18))
    k = random_kernel(g, 5)
    lhs = dg.blur_downsample(a * x + b * z, k, 2)
    rhs = a * dg.blur_downsample(x, k, 2) + b * dg.blur_downsample(z, k, 2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(0, 3.1),
       st.sampled_from([1, 2, 3]))
def test_constant_energy_preserved(c, s1, s2, th, scale):
    k = make_gaussian_kernel(GaussianKernelParams.from_any(s1, s2, th), 15)
    out = dg.degrade(np.full((24, 24), c), k, scale)
    np.testing.assert_allclose(out, c, atol=1e-13)


def test_collect_noise_examples(rng):
    bank = dg.collect_noise_patches([np.full((16, 16), 0.4)], 8, 0.0)
    assert len(bank) == 4 and all(np.all(p == 0) for p in bank.patches)
    img = rng.random((16, 16))
    img[:8, :8] = 0.2
    bank = dg.collect_noise_patches([img], 8, 0.0)
    assert len(bank) == 1
    checker = (np.indices((8, 8)).sum(0) % 2).astype(float)
    assert np.var(checker) == 0.25
    assert len(dg.collect_noise_patches([checker], 8, 0.1)) == 0
    assert len(dg.collect_noise_patches([checker], 8, 0.25)) == 1
    with pytest.raises(ParameterError):
        dg.collect_noise_patches([img], 3, 0.1)


def test_collect_noise_invariants(rng):
    imgs = [np.clip(0.5 + 0.03 * rng.standard_normal((40, 40)), 0, 1) for _ in range(2)]
    imgs.append(rng.random((3, 20, 20)))
    thr = 0.002
    bank = dg.collect_noise_patches(imgs, 5, thr)
    assert len(bank) > 0
    for p in bank.patches:
        assert abs(p.mean()) <= 1e-9
        assert p.var() <= thr


def test_collect_noise_order():
    a = np.zeros((8, 16))
    a[:, 8:] = 0.5
    bank = dg.collect_noise_patches([a, np.full((8, 8), 0.1)], 8, 0.0)
    assert len(bank) == 3
    np.testing.assert_array_equal(bank.patches[0], np.zeros((8, 8)))


def test_kernel_file_round_trip(tmp_path, rng):
    k = random_kernel(rng, 33)
    p = tmp_path / "k.srk"
    dg.save_kernel(k, p)
    assert p.read_text().startswith("SRK1 33\n")
    np.testing.assert_array_equal(dg.load_kernel(p), k)


def test_kernel_file_errors(tmp_path):
    p = tmp_path / "k.srk"
    p.write_text("SRK1 3\n1 2 3\n")
    with pytest.raises(FormatError):
        dg.load_kernel(p)
    p.write_text("NOPE")
    with pytest.raises(FormatError):
        dg.load_kernel(p)
    with pytest.raises(ImageIOError):
        dg.load_kernel(tmp_path / "missing.srk")


def test_noise_bank_round_trip(tmp_path, rng):
    patches = [p - p.mean() for p in (0.02 * rng.standard_normal((6, 6)) for _ in range(3))]
    bank = dg.NoiseBank(6, patches, 0.001)
    dg.save_noise_bank(bank, tmp_path / "bank")
    back = dg.load_noise_bank(tmp_path / "bank")
    assert back.patch_size == 6 and back.variance_threshold == 0.001 and len(back) == 3
    for a, b in zip(bank.patches, back.patches):
        assert np.abs(a - b).max() <= 1 / 65535
        assert abs(b.mean()) <= 1e-9
