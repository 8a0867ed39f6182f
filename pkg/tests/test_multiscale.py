import itertools

import numpy as np
import pytest

from oracles import haar_block, lstsq
from pcld.errors import ConfigError
from pcld.multiscale import (
    SCAN0,
    SCAN_DH,
    SCAN_DIM,
    SCAN_DVL,
    SCAN_DVR,
    ScanModel,
    build_pyramid,
    context_sources,
    detail_prediction,
    fit_scan_arrays,
    fit_scan_models,
    fold_detail,
    forward_level,
    haar_forward_block,
    haar_inverse_block,
    inverse_level,
    predict_scan,
    reconstruct,
    scan_context,
    scan_context_matrix,
    scan_order_key,
    scan_target,
    scan_width,
    width_features,
)
from pcld.pixio import Image

DETAILS = (SCAN_DH, SCAN_DVL, SCAN_DVR)


def test_constant_block():
    assert haar_forward_block(9, 9, 9, 9) == (9, 0, 0, 0)


def test_block_example(frozen):
    out = haar_forward_block(10, 20, 30, 40)
    assert list(out) == frozen["haar_10_20_30_40"]
    assert haar_inverse_block(*out) == (10, 20, 30, 40)


def test_corner_values_exhaustive():
    corner = (0, 1, 2, 3, 127, 128, 254, 255)
    for block in itertools.product(corner, repeat=4):
        out = haar_forward_block(*block)
        assert out == haar_block(*block)
        assert haar_inverse_block(*out) == block


def test_million_random_blocks():
    rng = np.random.default_rng(0)
    L = rng.integers(0, 256, (2000, 1000)).astype(np.int64)  # 500k blocks per half
    for _ in range(2):
        assert np.array_equal(inverse_level(*forward_level(L)), L)
        L = rng.integers(0, 256, (2000, 1000)).astype(np.int64)


def test_one_cycle_on_two_by_two():
    pyr = build_pyramid(Image(np.array([[10, 20], [30, 40]])), 1)
    assert pyr.scan0.shape == (1, 1)
    assert [d.shape for d in pyr.details[0]] == [(1, 1)] * 3
    assert reconstruct(pyr).flat() == [10, 20, 30, 40]


def test_constant_pyramid_has_zero_details():
    pyr = build_pyramid(Image(np.full((16, 16), 77, np.uint8)), 4)
    assert pyr.scan0.tolist() == [[77]]
    for grids in pyr.details:
        for g in grids:
            assert not g.any()


@pytest.mark.parametrize("seed", range(50))
def test_pyramid_round_trip(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 48, 2)
    k = int(rng.integers(1, 6))
    img = Image(rng.integers(0, 256, (h, w)))
    assert reconstruct(build_pyramid(img, k)) == img


def test_example_odd_image():
    img = Image(np.random.default_rng(1).integers(0, 256, (23, 37)))
    pyr = build_pyramid(img, 3)
    assert pyr.padded_shape == (24, 40)
    assert reconstruct(pyr) == img


@pytest.mark.parametrize("k", [0, 16, -1])
def test_cycle_bounds(k):
    with pytest.raises(ConfigError):
        build_pyramid(Image(np.zeros((4, 4))), k)


def test_detail_range():
    img = Image(np.random.default_rng(2).integers(0, 256, (32, 32)))
    for grids in build_pyramid(img, 5).details:
        for g in grids:
            assert g.min() >= -255 and g.max() <= 255


def test_constant_pyramid_context_differences_vanish():
    pyr = build_pyramid(Image(np.full((8, 8), 140, np.uint8)), 2)
    for c in (1, 2):
        for scan in DETAILS:
            h, w = pyr.averages[c - 1].shape
            for i in range(h):
                for j in range(w):
                    ctx = scan_context(pyr, scan, (i, j), c)
                    assert len(ctx) == SCAN_DIM[scan]
                    diffs = width_features(scan, np.array([ctx]) * 255)[0][1:]
                    assert not diffs.any()


def test_top_left_contexts_are_defined():
    pyr = build_pyramid(Image(np.random.default_rng(3).integers(0, 256, (8, 8))), 2)
    assert scan_context(pyr, SCAN0, (0, 0)) == [0.5] * 4
    for scan in DETAILS:
        ctx = scan_context(pyr, scan, (0, 0), 1)
        assert all(-1 <= v <= 1 for v in ctx)


def target_key(scan, cycle, i, j):
    return (0, SCAN0, i, j) if scan == SCAN0 else (cycle, scan, i, j)


def test_decode_order_audit():
    """Every context source must be decoded strictly before the target it feeds."""
    rng = np.random.default_rng(4)
    for _ in range(5):
        h, w = rng.integers(1, 9, 2)
        k = int(rng.integers(1, 4))
        pyr = build_pyramid(Image(rng.integers(0, 256, (h * 2**k, w * 2**k))), k)
        gh, gw = pyr.scan0.shape
        for i, j in itertools.product(range(gh), range(gw)):
            for src in context_sources(SCAN0, 0, i, j, (gh, gw)):
                assert scan_order_key(src) < target_key(SCAN0, 0, i, j)
        for c in range(1, k + 1):
            shape = pyr.averages[c - 1].shape
            for scan in DETAILS:
                for i, j in itertools.product(range(shape[0]), range(shape[1])):
                    for src in context_sources(scan, c, i, j, shape):
                        assert scan_order_key(src) < target_key(scan, c, i, j), (scan, c, i, j, src)


def test_matrix_matches_scalar_contexts():
    pyr = build_pyramid(Image(np.random.default_rng(5).integers(0, 256, (13, 11))), 2)
    mat = scan_context_matrix(pyr, SCAN0)
    h, w = pyr.scan0.shape
    for n, (i, j) in enumerate(itertools.product(range(h), range(w))):
        assert np.allclose(mat[n] / 255, scan_context(pyr, SCAN0, (i, j)), atol=0)
    for c in (1, 2):
        h, w = pyr.averages[c - 1].shape
        for scan in DETAILS:
            mat = scan_context_matrix(pyr, scan, c)
            for n, (i, j) in enumerate(itertools.product(range(h), range(w))):
                assert np.allclose(mat[n] / 255, scan_context(pyr, scan, (i, j), c), atol=1e-15)


def test_zero_details_fit():
    pyr = build_pyramid(Image(np.full((16, 16), 99, np.uint8)), 3)
    for m in fit_scan_models(pyr, strict=False):
        assert np.allclose(m.alpha, 0, atol=1e-9)
        assert m.beta[0] == pytest.approx(0, abs=1e-9)
        assert np.allclose(m.beta[1:], 0, atol=1e-9)


@pytest.mark.parametrize("scan", DETAILS)
def test_noiseless_detail_recovery(scan):
    rng = np.random.default_rng(6)
    d = SCAN_DIM[scan]
    ctx = rng.integers(-255, 256, (300, d)).astype(np.float64)
    true = rng.normal(0, 0.3, d)
    m = fit_scan_arrays(scan, ctx, ctx @ true, True, 1.0, 1)
    assert np.allclose(m.alpha, true, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_fit_matches_least_squares_oracle(seed):
    rng = np.random.default_rng(seed)
    pyr = build_pyramid(Image(rng.integers(0, 256, (32, 24))), 2)
    models = fit_scan_models(pyr)
    assert len(models) == 6
    for m in models:
        ctx = scan_context_matrix(pyr, m.scan, m.cycle)
        tgt = scan_target(pyr, m.scan, m.cycle).ravel()
        assert np.allclose(m.alpha, lstsq(ctx / 255, tgt / 255), atol=1e-8)
        r = np.abs(fold_detail(tgt, detail_prediction(m.alpha, ctx))) / 255
        assert np.allclose(m.beta, lstsq(width_features(m.scan, ctx), r), atol=1e-8)


def test_shared_models():
    pyr = build_pyramid(Image(np.random.default_rng(8).integers(0, 256, (32, 32))), 3)
    shared = fit_scan_models(pyr, share_cycles=True)
    assert [(m.scan, m.cycle) for m in shared] == [(s, 0) for s in DETAILS]


def test_predict_and_width():
    m = ScanModel(SCAN_DH, 1, (1.0, 0.0, 0.0, 0.0, 0.5), (0.01, 0.0, 0.0, 0.0, 0.0))
    assert predict_scan(m, [0.2, 0.9, 0.9, 0.9, 0.1]) == pytest.approx(0.25)
    assert scan_width(m, [0.2, 0.9, 0.9, 0.9, 0.1]) == pytest.approx(0.01)
    single = ScanModel(SCAN_DH, 1, (0,) * 5, (0.03,), linear_width=False)
    assert scan_width(single, [0.0] * 5) == 0.03
    with pytest.raises(ValueError):
        ScanModel(SCAN_DVR, 1, (0.0,) * 5, (0.0,) * 7)
