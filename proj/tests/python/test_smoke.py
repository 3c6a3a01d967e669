import numpy as np
import pytest

import erlnet


def test_image_metrics_identity():
    rng = np.random.default_rng(0)
    a = rng.random((16, 16, 3), dtype=np.float32)
    psnr, ssim = erlnet.image_metrics(a, a)
    assert np.isinf(psnr)
    assert ssim == pytest.approx(1.0, abs=1e-6)


def test_image_metrics_psnr_example():
    a = np.full((16, 16, 3), 0.4, dtype=np.float32)
    b = np.full((16, 16, 3), 0.5, dtype=np.float32)
    psnr, _ = erlnet.image_metrics(a, b)
    assert psnr == pytest.approx(20.0, abs=1e-4)


def test_quantize_matches_numpy():
    rng = np.random.default_rng(1)
    codes = rng.standard_normal((5, 4)).astype(np.float32)
    book = rng.standard_normal((7, 4)).astype(np.float32)
    q, idx = erlnet.quantize(codes, book)
    want = np.argmin(((codes[:, None, :] - book[None]) ** 2).sum(-1), axis=1)
    assert list(idx) == list(want)
    # quantized is codes + (entry - codes): entry up to float rounding
    assert np.max(np.abs(q - book[want])) < 1e-6


def test_delta_round_trip():
    rng = np.random.default_rng(2)
    poses = rng.uniform(-2, 2, (40, 6)).astype(np.float32)
    first, deltas = erlnet.delta_encode(poses)
    rec = erlnet.delta_decode(first, deltas)
    assert np.max(np.abs(rec - poses)) < 1e-6


def test_synthetic_generators_deterministic():
    e1, p1 = erlnet.synthetic_sequences(3, 12, 1)
    e2, p2 = erlnet.synthetic_sequences(3, 12, 1)
    assert e1.shape == (12, 53) and p1.shape == (11, 6)
    assert np.array_equal(e1, e2) and np.array_equal(p1, p2)
    a = erlnet.synth_audio_features(3, 12)
    assert a.shape == (12, 29)
    img = erlnet.synthetic_frame(1, 2, 16, 0)
    assert img.shape == (16, 16, 3)
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_gradient_suite_clean():
    errs = erlnet.gradient_suite(7)
    assert len(errs) > 20
    assert max(e for _, e in errs) < 1e-3
