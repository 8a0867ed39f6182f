import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_m, discrete_laplace, golomb_codeword
from pcld.entropy import (
    DETAIL,
    PIXEL,
    PROB_SCALE,
    BGrid,
    BitWriter,
    accurate_decode,
    accurate_encode,
    bytes_to_bits,
    code_cost_bits,
    discretize_laplace,
    expected_golomb_bits,
    fold_residue,
    golomb_bits,
    golomb_decode,
    golomb_encode,
    golomb_penalty_curve,
    grid_for,
    optimal_m,
    unfold_residue,
    unzigzag,
    zigzag,
    zigzag_array,
    zigzag_probs,
)
from pcld.errors import DecodeError


def test_fold_examples():
    assert fold_residue(10, 10) == 0
    assert fold_residue(0, 255) == 1
    assert fold_residue(255, 0) == -1


def test_fold_exhaustive_round_trip():
    for mu in range(256):
        for x in range(256):
            r = fold_residue(x, mu)
            assert -128 <= r <= 127
            assert unfold_residue(r, mu) == x


def test_detail_fold_round_trip():
    for mu in range(-255, 256, 17):
        for d in range(-255, 256):
            r = fold_residue(d, mu, 512)
            assert unfold_residue(r, mu, 512, -256) == d


def test_zigzag_order():
    assert [zigzag(r) for r in (0, 1, -1, 2, -2)] == [0, 1, 2, 3, 4]
    assert zigzag(-128) == 255
    assert zigzag(-256, 512) == 511


@pytest.mark.parametrize("size", [256, 512])
def test_zigzag_bijection(size):
    half = size // 2
    us = [zigzag(r, size) for r in range(-half, half)]
    assert sorted(us) == list(range(size))
    assert [unzigzag(u, size) for u in us] == list(range(-half, half))
    assert zigzag_array(np.arange(-half, half), size).tolist() == us


def test_golomb_examples():
    assert golomb_encode(0, 0) == "1" and golomb_bits(0, 0) == 1
    assert golomb_encode(6, 1) == "0001" + "0" and golomb_bits(6, 1) == 5


def test_golomb_escape():
    word = golomb_encode(200, 0)
    assert word == "0" * 24 + format(200, "09b")
    assert golomb_bits(200, 0) == 33
    assert golomb_decode(word, 0, 0) == (200, 33)
    assert golomb_encode(500, 1, 10) == "0" * 24 + format(500, "010b")


def test_golomb_exhaustive_round_trip():
    for m in range(9):
        for u in range(256):
            word = golomb_encode(u, m)
            assert word == golomb_codeword(u, m)
            assert len(word) == golomb_bits(u, m)
            assert golomb_decode(word + "1011", 0, m) == (u, len(word))


def test_golomb_stream_round_trip():
    rng = np.random.default_rng(1)
    values = rng.integers(0, 256, 500).tolist()
    ms = rng.integers(0, 9, 500).tolist()
    w = BitWriter()
    for u, m in zip(values, ms):
        w.write(golomb_encode(u, m))
    bits = bytes_to_bits(w.getvalue())
    pos = 0
    for u, m in zip(values, ms):
        got, pos = golomb_decode(bits, pos, m)
        assert got == u
    assert pos == w.nbits


def test_golomb_truncation_is_reported():
    with pytest.raises(DecodeError):
        golomb_decode("0001", 0, 3)
    with pytest.raises(ValueError):
        golomb_encode(-1, 0)


def test_discretized_law_basics(frozen):
    p = discretize_laplace(5.0)
    assert p.sum() == pytest.approx(1.0, abs=1e-15)
    # the right tail sits on +127, so the mirror image holds up to |r| = 126
    for r in range(1, 127):
        assert p[128 + r] == pytest.approx(p[128 - r], rel=1e-12)
    assert p[255] > p[1]
    assert p[128] == pytest.approx(frozen["laplace_center_mass_b5"], rel=1e-12)


@pytest.mark.parametrize("b", [0.3, 5.0, 40.0, 200.0])
def test_discretized_law_matches_high_precision(b):
    ref = discrete_laplace(b)
    p = discretize_laplace(b)
    for r, v in ref.items():
        assert p[r + 128] == pytest.approx(float(v), rel=1e-9, abs=1e-18)


def test_code_cost_examples():
    assert code_cost_bits([0.5, 0.5], [0]) == 1.0
    assert code_cost_bits([0.25] * 4, [1, 3]) == 4.0
    with pytest.raises(ValueError):
        code_cost_bits([1.0, 0.0], [1])


def test_code_cost_cross_entropy_second_pass():
    rng = np.random.default_rng(4)
    p = zigzag_probs(discretize_laplace(7.0))
    syms = rng.choice(256, 2000, p=p)
    counts = np.bincount(syms, minlength=256)
    second = -float(np.sum(counts[counts > 0] * np.log2(p[counts > 0])))
    assert code_cost_bits(p, syms) == pytest.approx(second, rel=1e-10)


def test_optimal_m_examples(frozen):
    assert optimal_m(1e-4) == 0
    assert optimal_m(10.0) == frozen["optimal_m_b10"]


def test_optimal_m_minimizes_and_is_monotone():
    grid = grid_for(PIXEL)
    prev = 0
    for b in grid.levels[::4]:
        m = optimal_m(b)
        ref_m, ref_len = best_m(b)
        assert m == ref_m
        pu = zigzag_probs(discretize_laplace(b))
        assert expected_golomb_bits(pu, m, 9) == pytest.approx(ref_len, rel=1e-9)
        assert m >= prev
        prev = m


def test_penalty_curve_matches_frozen(frozen):
    pts = frozen["penalty_curve"]
    rows = golomb_penalty_curve([p["b"] for p in pts])
    for (b, g, h), ref in zip(rows, pts):
        assert g >= h
        assert g == pytest.approx(ref["golomb"], rel=1e-9)
        assert h == pytest.approx(ref["entropy"], rel=1e-9)


def test_penalty_large_for_tiny_scales():
    (_, g, h), = golomb_penalty_curve([0.2])
    assert g >= 1.0 and g / h - 1 > 0.5


def test_grid_tables():
    for alphabet in (PIXEL, DETAIL):
        grid = BGrid(alphabet)
        ratios = np.diff(np.log(grid.levels))
        assert np.allclose(ratios, ratios[0])
        assert grid.levels[0] == pytest.approx(alphabet.grid_lo) and grid.levels[-1] == pytest.approx(alphabet.grid_hi)
        for lv in (0, 20, 63):
            f = grid.freqs(lv)
            assert len(f) == alphabet.size and sum(f) == PROB_SCALE and min(f) >= 1


def test_level_choice_is_nearest_in_log_space():
    grid = grid_for(PIXEL)
    rng = np.random.default_rng(2)
    for b in np.exp(rng.uniform(math.log(0.01), math.log(500), 300)):
        lv = grid.level_index(b)
        best = min(range(64), key=lambda i: abs(math.log(grid.levels[i]) - math.log(b)))
        assert lv == best or abs(abs(math.log(grid.levels[lv] / b)) - abs(math.log(grid.levels[best] / b))) < 1e-12


def test_accurate_empty_stream():
    data = accurate_encode([], [])
    assert len(data) == 4
    assert accurate_decode(data, []) == []


def test_accurate_single_level_cost():
    grid = grid_for(PIXEL)
    lv = 30
    p = grid.table_probs(lv)
    syms = np.random.default_rng(3).choice(256, 10_000, p=p).tolist()
    data = accurate_encode(syms, [lv] * len(syms))
    cost = code_cost_bits(p, syms)
    assert abs(8 * len(data) - cost) <= 0.01 * cost
    assert 8 * len(data) <= cost + 256
    assert accurate_decode(data, [lv] * len(syms)) == syms


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 63)), max_size=300))
def test_accurate_mixed_levels_round_trip(pairs):
    syms = [s for s, _ in pairs]
    levels = [lv for _, lv in pairs]
    assert accurate_decode(accurate_encode(syms, levels), levels) == syms


def test_accurate_detail_alphabet():
    grid = grid_for(DETAIL)
    rng = np.random.default_rng(5)
    syms = rng.integers(0, 512, 400).tolist()
    levels = rng.integers(0, 64, 400).tolist()
    assert accurate_decode(accurate_encode(syms, levels, grid), levels, grid) == syms


@pytest.mark.parametrize("cut", [1, 3, 10])
def test_accurate_corruption_raises(cut):
    syms = list(range(200))
    data = accurate_encode(syms, [5] * 200)
    with pytest.raises(DecodeError):
        accurate_decode(data[:-cut], [5] * 200)
    with pytest.raises(DecodeError):
        accurate_decode(data + b"\x00", [5] * 200)


@pytest.mark.parametrize("b", [2.0, 8.0, 32.0])
def test_accurate_not_worse_than_golomb(b):
    grid = grid_for(PIXEL)
    lv = grid.level_index(b)
    syms = np.random.default_rng(6).choice(256, 65536, p=grid.table_probs(lv)).tolist()
    m = grid.golomb_m(lv)
    golomb_bytes = (sum(golomb_bits(u, m) for u in syms) + 7) // 8
    accurate_bytes = len(accurate_encode(syms, [lv] * len(syms)))
    assert accurate_bytes <= golomb_bytes + 64
