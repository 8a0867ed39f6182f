"""Residue alphabets, power-of-2 Golomb coding, discretized Laplace tables and a table-driven rANS coder."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DecodeError

ESCAPE_RUN = 24
MAX_M = 15
N_LEVELS = 64
PROB_BITS = 16
PROB_SCALE = 1 << PROB_BITS


@dataclass(frozen=True)
class Alphabet:
    """Folded residue alphabet ``[-half, half)`` with its coding-table grid."""

    size: int
    raw_bits: int
    grid_lo: float
    grid_hi: float

    @property
    def half(self) -> int:
        return self.size // 2


PIXEL = Alphabet(256, 9, 0.05, 128.0)
DETAIL = Alphabet(512, 10, 0.1, 256.0)


# --- folding and zig-zag ------------------------------------------------------

def fold_residue(x: int, mu: int, size: int = 256) -> int:
    half = size // 2
    return (x - mu + half) % size - half


def unfold_residue(r: int, mu: int, size: int = 256, low: int = 0) -> int:
    """Inverse of :func:`fold_residue` for values in ``[low, low + size)``."""
    return (r + mu - low) % size + low


def zigzag(r: int, size: int = 256) -> int:
    u = 2 * r - 1 if r > 0 else -2 * r
    # -half would map to `size`, outside the alphabet; it takes the unused last slot
    return size - 1 if u == size else u


def unzigzag(u: int, size: int = 256) -> int:
    if u == size - 1:
        return -(size // 2)
    return (u + 1) >> 1 if u & 1 else -(u >> 1)


def zigzag_array(r: np.ndarray, size: int = 256) -> np.ndarray:
    u = np.where(r > 0, 2 * r - 1, -2 * r)
    return np.where(u == size, size - 1, u)


# --- Golomb -------------------------------------------------------------------

def golomb_bits(u: int, m: int, raw_bits: int = 9) -> int:
    q = u >> m
    if q >= ESCAPE_RUN:
        return ESCAPE_RUN + raw_bits
    return q + 1 + m


def golomb_bits_2q(u: int, m: int) -> int:
    """Codeword length under the ``2*floor(u/M) + 1 + m`` accounting."""
    return 2 * (u >> m) + 1 + m


def golomb_encode(u: int, m: int, raw_bits: int = 9) -> str:
    if u < 0 or not 0 <= m <= MAX_M:
        raise ValueError(f"bad Golomb input u={u} m={m}")
    q = u >> m
    if q >= ESCAPE_RUN:
        return "0" * ESCAPE_RUN + format(u, f"0{raw_bits}b")
    tail = format(u & ((1 << m) - 1), f"0{m}b") if m else ""
    return "0" * q + "1" + tail


def golomb_decode(bits: str, pos: int, m: int, raw_bits: int = 9) -> tuple[int, int]:
    """Decode one codeword from a '0'/'1' string; returns ``(u, new_pos)``."""
    n = len(bits)
    one = bits.find("1", pos, pos + ESCAPE_RUN)
    if one < 0:
        end = pos + ESCAPE_RUN + raw_bits
        if end > n:
            raise DecodeError("truncated Golomb payload")
        return int(bits[pos + ESCAPE_RUN : end], 2), end
    end = one + 1 + m
    if end > n:
        raise DecodeError("truncated Golomb payload")
    u = (one - pos) << m
    if m:
        u |= int(bits[one + 1 : end], 2)
    return u, end


class BitWriter:
    """MSB-first bit accumulator."""

    def __init__(self):
        self._chunks: list[str] = []
        self.nbits = 0

    def write(self, bits: str) -> None:
        self._chunks.append(bits)
        self.nbits += len(bits)

    def getvalue(self) -> bytes:
        s = "".join(self._chunks)
        pad = -len(s) % 8
        s += "0" * pad
        if not s:
            return b""
        return int(s, 2).to_bytes(len(s) // 8, "big")


def bytes_to_bits(data: bytes) -> str:
    if not data:
        return ""
    return format(int.from_bytes(data, "big"), f"0{len(data) * 8}b")


# --- discretized Laplace --------------------------------------------------------

def discretize_laplace(b_int: float, size: int = 256) -> np.ndarray:
    """Probabilities of folded residues ``r = -half .. half-1`` (index ``r + half``).

    Mass beyond the alphabet is folded onto the two extreme symbols.
    """
    if not b_int > 0:
        raise ValueError("scale must be positive")
    half = size // 2
    r = np.arange(1, half, dtype=np.float64)
    # mass of the interval [r - 1/2, r + 1/2] for r >= 1
    side = 0.5 * (np.exp(-(r - 0.5) / b_int) - np.exp(-(r + 0.5) / b_int))
    p = np.empty(size)
    p[half] = -math.expm1(-0.5 / b_int)
    p[half + 1 :] = side
    p[1:half] = side[::-1]
    # tails beyond +-(half - 1/2)
    tail = 0.5 * math.exp(-(half - 0.5) / b_int)
    p[0] = tail
    p[-1] += tail
    return p / p.sum()


def zigzag_probs(p_r: np.ndarray) -> np.ndarray:
    """Reorder an ``r``-indexed probability vector into zig-zag symbol order."""
    size = len(p_r)
    half = size // 2
    out = np.empty(size)
    for r in range(-half, half):
        out[zigzag(r, size)] = p_r[r + half]
    return out


def code_cost_bits(p: Sequence[float], symbols: Iterable[int]) -> float:
    total = 0.0
    for s in symbols:
        ps = p[s]
        if not ps > 0:
            raise ValueError(f"symbol {s} has zero probability")
        total -= math.log2(ps)
    return total


def quantize_frequencies(p: np.ndarray, total: int = PROB_SCALE) -> list[int]:
    """Integer frequencies >= 1 summing exactly to ``total``."""
    freq = [max(1, int(math.floor(v * total + 0.5))) for v in p]
    excess = sum(freq) - total
    if excess > 0:
        order = sorted(range(len(freq)), key=lambda i: (-freq[i], i))
        while excess > 0:
            progressed = False
            for i in order:
                if excess == 0:
                    break
                if freq[i] > 1:
                    freq[i] -= 1
                    excess -= 1
                    progressed = True
            if not progressed:
                raise ValueError("alphabet too large for the probability scale")
    elif excess < 0:
        i = max(range(len(freq)), key=lambda j: (freq[j], -j))
        freq[i] -= excess
    return freq


def expected_golomb_bits(pu: np.ndarray, m: int, raw_bits: int) -> float:
    return float(sum(pu[u] * golomb_bits(u, m, raw_bits) for u in range(len(pu))))


def optimal_m(b_int: float, size: int = 256, raw_bits: int | None = None) -> int:
    """Golomb parameter minimizing expected codeword length; ties go to the smaller m."""
    if raw_bits is None:
        raw_bits = DETAIL.raw_bits if size == 512 else PIXEL.raw_bits
    pu = zigzag_probs(discretize_laplace(b_int, size))
    best_m, best = 0, math.inf
    for m in range(MAX_M + 1):
        e = expected_golomb_bits(pu, m, raw_bits)
        if e < best - 1e-12:
            best_m, best = m, e
    return best_m


def shannon_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def golomb_penalty_curve(b_grid: Iterable[float], size: int = 256) -> list[tuple[float, float, float]]:
    """``(b, expected Golomb bits at optimal m, Shannon entropy)`` per scale."""
    raw_bits = DETAIL.raw_bits if size == 512 else PIXEL.raw_bits
    rows = []
    for b in b_grid:
        pu = zigzag_probs(discretize_laplace(b, size))
        m = optimal_m(b, size, raw_bits)
        rows.append((float(b), expected_golomb_bits(pu, m, raw_bits), shannon_bits(pu)))
    return rows


# --- b-level grid with prepared tables -----------------------------------------

@dataclass
class BGrid:
    """Geometric grid of integer-scale ``b`` levels with prepared coding tables."""

    alphabet: Alphabet = PIXEL
    n_levels: int = N_LEVELS
    levels: list[float] = field(init=False)
    midpoints: list[float] = field(init=False)

    def __post_init__(self):
        lo, hi, n = self.alphabet.grid_lo, self.alphabet.grid_hi, self.n_levels
        ratio = hi / lo
        self.levels = [lo * math.pow(ratio, i / (n - 1)) for i in range(n)]
        self.midpoints = [math.sqrt(a * b) for a, b in zip(self.levels, self.levels[1:])]
        self._freq: dict[int, list[int]] = {}
        self._cum: dict[int, list[int]] = {}
        self._m: dict[int, int] = {}

    def level_index(self, b_int: float) -> int:
        return bisect_right(self.midpoints, b_int)

    def level_indices(self, b_int: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.midpoints), b_int, side="right")

    def freqs(self, level: int) -> list[int]:
        f = self._freq.get(level)
        if f is None:
            p = zigzag_probs(discretize_laplace(self.levels[level], self.alphabet.size))
            f = self._freq[level] = quantize_frequencies(p)
        return f

    def cumulative(self, level: int) -> list[int]:
        c = self._cum.get(level)
        if c is None:
            c = [0]
            for v in self.freqs(level):
                c.append(c[-1] + v)
            self._cum[level] = c
        return c

    def table_probs(self, level: int) -> np.ndarray:
        return np.asarray(self.freqs(level), dtype=np.float64) / PROB_SCALE

    def golomb_m(self, level: int) -> int:
        m = self._m.get(level)
        if m is None:
            m = self._m[level] = optimal_m(self.levels[level], self.alphabet.size, self.alphabet.raw_bits)
        return m


_GRIDS: dict[int, BGrid] = {}


def grid_for(alphabet: Alphabet) -> BGrid:
    g = _GRIDS.get(alphabet.size)
    if g is None:
        g = _GRIDS[alphabet.size] = BGrid(alphabet)
    return g


# --- rANS -------------------------------------------------------------------------

RANS_L = 1 << 23


def rans_encode(pairs: Sequence[tuple[int, int]]) -> bytes:
    """Encode ``(start, freq)`` pairs (16-bit scale); decoding yields them in order."""
    x = RANS_L
    out = bytearray()
    bound = (RANS_L >> PROB_BITS) << 8
    for start, freq in reversed(pairs):
        x_max = bound * freq
        while x >= x_max:
            out.append(x & 0xFF)
            x >>= 8
        x = ((x // freq) << PROB_BITS) + (x % freq) + start
    out += x.to_bytes(4, "little")
    out.reverse()
    return bytes(out)


class RansDecoder:
    def __init__(self, data: bytes):
        if len(data) < 4:
            raise DecodeError("rANS payload shorter than its state")
        self.data = data
        self.pos = 4
        self.x = int.from_bytes(data[:4], "big")

    def decode(self, cum: list[int], freqs: list[int]) -> int:
        x = self.x
        slot = x & (PROB_SCALE - 1)
        s = bisect_right(cum, slot) - 1
        x = freqs[s] * (x >> PROB_BITS) + slot - cum[s]
        data, pos = self.data, self.pos
        while x < RANS_L:
            if pos >= len(data):
                raise DecodeError("truncated rANS payload")
            x = (x << 8) | data[pos]
            pos += 1
        self.x, self.pos = x, pos
        return s

    def finish(self) -> None:
        if self.x != RANS_L or self.pos != len(self.data):
            raise DecodeError("rANS payload did not end in the initial state")


def accurate_encode(symbols: Sequence[int], levels: Sequence[int], grid: BGrid | None = None) -> bytes:
    grid = grid or grid_for(PIXEL)
    pairs = []
    for s, lv in zip(symbols, levels):
        cum = grid.cumulative(lv)
        pairs.append((cum[s], cum[s + 1] - cum[s]))
    return rans_encode(pairs)


def accurate_decode(payload: bytes, levels: Sequence[int], grid: BGrid | None = None) -> list[int]:
    """Decode with per-symbol levels known up front (for streams whose levels do not depend on decoded data)."""
    grid = grid or grid_for(PIXEL)
    dec = RansDecoder(payload)
    out = [dec.decode(grid.cumulative(lv), grid.freqs(lv)) for lv in levels]
    dec.finish()
    return out
