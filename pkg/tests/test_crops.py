import numpy as np
import pytest
from scipy import stats

from patchfield.crops import sample_naive_crop, sample_patch_crop


def contains(spec, p):
    x0, y0 = p
    return spec.x <= x0 <= spec.x + spec.w and spec.y <= y0 <= spec.y + spec.h


def in_bounds(spec, width, height):
    return (0 <= spec.x and spec.x + spec.w <= width
            and 0 <= spec.y and spec.y + spec.h <= height)


def test_corner_center_forces_origin():
    rng = np.random.default_rng(0)
    for _ in range(200):
        spec = sample_patch_crop(rng, 100, 80, (0.0, 0.0), 0.5, 0.9)
        assert spec.x == 0 and spec.y == 0


def test_full_area_square_aspect_is_full_frame():
    rng = np.random.default_rng(1)
    w, h = 120, 90
    spec = sample_patch_crop(rng, w, h, (60.0, 45.0), 1.0, 1.0,
                             aspect_range=(w / h, w / h))
    assert (spec.x, spec.y, spec.w, spec.h) == (0, 0, w, h)
    spec = sample_naive_crop(rng, w, h, 1.0, 1.0, aspect_range=(w / h, w / h))
    assert (spec.x, spec.y, spec.w, spec.h) == (0, 0, w, h)


def test_patch_crop_inclusion_and_area_batch():
    rng = np.random.default_rng(7)
    W, H, p = 1600, 900, (800.0, 450.0)
    a, b = 0.5, 0.9
    for _ in range(20_000):
        spec = sample_patch_crop(rng, W, H, p, a, b)
        assert contains(spec, p)
        assert in_bounds(spec, W, H)
        area = spec.w * spec.h
        slack = spec.w + spec.h + 1
        assert a * W * H - slack <= area <= b * W * H + slack
        assert spec.out_h == H and spec.out_w == W


def test_naive_crop_bounds_batch():
    rng = np.random.default_rng(8)
    W, H = 640, 360
    for _ in range(20_000):
        spec = sample_naive_crop(rng, W, H, 0.5, 0.9)
        assert in_bounds(spec, W, H)


def test_samplers_deterministic_under_seed():
    a = [sample_patch_crop(np.random.default_rng(42), 300, 200, (50.0, 60.0), 0.5, 0.9)
         for _ in range(1)]
    b = [sample_patch_crop(np.random.default_rng(42), 300, 200, (50.0, 60.0), 0.5, 0.9)
         for _ in range(1)]
    assert a == b
    seq1 = []
    seq2 = []
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    for _ in range(50):
        seq1.append(sample_naive_crop(r1, 300, 200, 0.4, 0.8))
        seq2.append(sample_naive_crop(r2, 300, 200, 0.4, 0.8))
    assert seq1 == seq2


def test_areas_uniform_ks():
    # realized areas track U[a*W*H, b*W*H]; rounding noise is tiny at this frame
    rng = np.random.default_rng(11)
    W, H = 1600, 900
    a, b = 0.5, 0.9
    areas = []
    for _ in range(10_000):
        spec = sample_naive_crop(rng, W, H, a, b)
        areas.append(spec.w * spec.h)
    lo, hi = a * W * H, b * W * H
    stat, pvalue = stats.kstest(np.array(areas), stats.uniform(lo, hi - lo).cdf)
    assert pvalue > 0.01


def test_edge_centers_never_collapse():
    rng = np.random.default_rng(13)
    W, H = 97, 53
    for p in ((0.0, 0.0), (W, H), (W, 0.0), (0.0, H), (W / 2, H), (1.0, 1.0)):
        for _ in range(500):
            spec = sample_patch_crop(rng, W, H, p, 0.3, 1.0)
            assert contains(spec, p)
            assert in_bounds(spec, W, H)


def test_rejects_bad_inputs():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_patch_crop(rng, 100, 100, (200.0, 10.0), 0.5, 0.9)
    with pytest.raises(ValueError):
        sample_naive_crop(rng, 100, 100, 0.9, 0.5)
    with pytest.raises(ValueError):
        sample_naive_crop(rng, 100, 100, 0.0, 0.5)
