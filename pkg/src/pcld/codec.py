"""Per-stream modeling and coding shared by the raster and Haar scan modes.

Everything on the decode-critical path (prediction, scale, level choice) is
computed with the same float64 operations in the same order on both sides:
the vectorized encoder only uses elementwise ``+ - * /``, floor and
comparisons, and every transcendental value comes from a shared table or a
``math`` call made identically by encoder and decoder.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from . import entropy
from .entropy import DETAIL, PIXEL, BGrid, grid_for
from .errors import DecodeError
from .linalg import normal_solve
from .multiscale import (
    POW08,
    POW08_ARR,
    SCAN_DH,
    SCAN_DVL,
    SCAN_DVR,
    ScanModel,
    _unlift,
    detail_context_planes,
    detail_prediction,
    fold_detail,
    inverse_level,
    width_features,
)
from .pixio import neighbor_planes
from .predict import AVG, MED, PredictorKind, PredictorParams
from .width import (
    B_FLOOR,
    TRIPLE_INDEX,
    WidthKind,
    WidthModel,
    ctx365_table,
    epd_mean_abs_factor,
    fit_single,
    level_of,
    theta_to_b,
    thresholds_from_differences,
)

POW01 = [math.pow(k / 255.0, 0.1) if k else 0.0 for k in range(511)]
POW01_ARR = np.array(POW01)

ADAPTIVE_NU = 0.95
ADAPTIVE_ETA = 0.95
ADAPTIVE_SEED_B = 0.1


def code_scale(kappa: float) -> float:
    """Multiplier from a normalized scale ``b`` to the Laplace table scale.

    For ``kappa != 1`` the table is the Laplace law with the same mean
    absolute residue as the fitted exponential power law.
    """
    return 255.0 * epd_mean_abs_factor(kappa) if kappa != 1.0 else 255.0


@dataclass
class Stream:
    """Coded symbols of one scan, ready for an entropy coder."""

    grid: BGrid
    symbols: np.ndarray
    levels: np.ndarray


class AdaptiveScale:
    """Mirror of :func:`pcld.adaptive.ema_update` driving one stream's scale."""

    def __init__(self, kappa: float, seed_b: float = ADAPTIVE_SEED_B):
        self.kappa = kappa
        self.theta = seed_b**kappa if kappa != 1.0 else seed_b
        self.mu = None

    def b(self) -> float:
        return theta_to_b(self.theta, self.kappa)

    def push(self, r: float) -> None:
        if self.mu is None:
            self.mu = r
            return
        dev = abs(r - self.mu)
        if self.kappa != 1.0:
            dev = math.pow(dev, self.kappa)
        self.mu = ADAPTIVE_NU * self.mu + (1.0 - ADAPTIVE_NU) * r
        self.theta = ADAPTIVE_ETA * self.theta + (1.0 - ADAPTIVE_ETA) * dev


def adaptive_levels(residues: np.ndarray, grid: BGrid, kappa: float) -> np.ndarray:
    track = AdaptiveScale(kappa)
    scale = code_scale(kappa)
    mid = grid.midpoints
    out = np.empty(len(residues), dtype=np.int64)
    for t, r in enumerate(residues.tolist()):
        out[t] = bisect_right(mid, track.b() * scale)
        track.push(r / 255.0)
    return out


# --- raster streams --------------------------------------------------------------------

@dataclass(frozen=True)
class RasterModel:
    predictor: PredictorParams
    width: WidthModel
    adaptive: bool = False


def ctx365_luts(thresholds) -> list[list[int]]:
    """Per-channel ``(level + 4) * weight`` for integer pixel differences -255..255."""
    weights = (81, 9, 1)
    return [
        [(level_of(thresholds[ch], k / 255.0) + 4) * weights[ch] for k in range(-255, 256)]
        for ch in range(3)
    ]


_KEY_INDEX = [0] * 729
_KEY_SIGN = [1] * 729
for (_a, _b, _c), _q in TRIPLE_INDEX.items():
    _KEY_INDEX[(_a + 4) * 81 + (_b + 4) * 9 + (_c + 4)] = _q.index
    _KEY_SIGN[(_a + 4) * 81 + (_b + 4) * 9 + (_c + 4)] = _q.sign
_KEY_INDEX_ARR = np.array(_KEY_INDEX)
_KEY_SIGN_ARR = np.array(_KEY_SIGN)


def _ctx_keys(thresholds, A, B, C, D) -> np.ndarray:
    luts = [np.array(l) for l in ctx365_luts(thresholds)]
    d = [C - A, B - C, D - B]
    return sum(luts[ch][d[ch].astype(np.int64) + 255] for ch in range(3))


def _predict_planes(p: PredictorParams, A, B, C, D) -> np.ndarray:
    if p.kind is PredictorKind.MED:
        lo = np.minimum(A, B)
        hi = np.maximum(A, B)
        mu = np.where(C >= hi, lo, np.where(C <= lo, hi, A + B - C))
    else:
        a0, a1, a2, a3 = p.weights
        mu = a0 * A + a1 * B + a2 * C + a3 * D
    return mu


def _linear_features(kind: WidthKind, A, B, C, D) -> list[np.ndarray]:
    idx = lambda v: np.abs(v).astype(np.int64)
    feats = [POW08_ARR[idx(C - A)], POW08_ARR[idx(B - C)], POW08_ARR[idx(D - B)]]
    if kind is WidthKind.LIN11:
        for v in (A, B, C, D):
            t = (v - 127.5) / 255.0
            t2 = t * t
            feats.append(t2 * t2)
        feats.append(POW01_ARR[idx(C - 2.0 * B + D)])
        feats.append(POW01_ARR[idx(A - 2.0 * C + B)])
    return feats


def _linear_scale(beta, feats) -> np.ndarray:
    s = np.full(feats[0].shape, beta[0])
    for bj, f in zip(beta[1:], feats):
        s = s + bj * f
    return s


def _thetas_to_b(s: np.ndarray, kappa: float) -> np.ndarray:
    if kappa == 1.0:
        return np.maximum(s, B_FLOOR)
    return np.array([theta_to_b(v, kappa) for v in s.ravel().tolist()]).reshape(s.shape)


def fit_raster_model(pixels: np.ndarray, predictor: str, width: str, kappa: float = 1.0, adaptive: bool = False) -> RasterModel:
    """Fit predictor and scale model for one raster grid from its own pixels."""
    A, B, C, D = neighbor_planes(pixels)
    x = np.asarray(pixels, dtype=np.int64)
    if predictor == "med":
        p = MED
    elif predictor == "avg":
        p = AVG
    else:
        P = np.stack([A.ravel(), B.ravel(), C.ravel(), D.ravel()], axis=1) / 255.0
        alpha = normal_solve(P, x.ravel() / 255.0, strict=False)
        p = PredictorParams(PredictorKind.LINEAR, tuple(alpha.tolist()))
    if adaptive:
        return RasterModel(p, WidthModel(WidthKind.SINGLE, b=ADAPTIVE_SEED_B, kappa=kappa), True)
    mu = np.clip(np.floor(_predict_planes(p, A, B, C, D) + 0.5), 0, 255).astype(np.int64)
    r = np.abs(entropy_fold(x - mu)).ravel() / 255.0
    kind = WidthKind[width.upper()]
    if kind is WidthKind.SINGLE:
        wm = fit_single(r, kappa)
    elif kind is WidthKind.CTX365:
        diffs = np.stack([(C - A).ravel(), (B - C).ravel(), (D - B).ravel()], axis=1) / 255.0
        thresholds = thresholds_from_differences(diffs)
        keys = _ctx_keys(thresholds, A, B, C, D).ravel()
        theta = ctx365_table(_KEY_INDEX_ARR[keys], r if kappa == 1.0 else r**kappa)
        table = tuple(theta_to_b(float(t), kappa) for t in theta)
        wm = WidthModel(WidthKind.CTX365, thresholds=thresholds, table=table, kappa=kappa)
    else:
        feats = _linear_features(kind, A, B, C, D)
        S = np.stack([np.ones(r.size)] + [f.ravel() for f in feats], axis=1)
        beta = normal_solve(S, r if kappa == 1.0 else r**kappa, strict=False)
        wm = WidthModel(kind, beta=tuple(beta.tolist()), kappa=kappa)
    return RasterModel(p, wm, False)


def entropy_fold(diff):
    return (diff + 128) % 256 - 128


def encode_raster(pixels: np.ndarray, model: RasterModel) -> tuple[Stream, np.ndarray]:
    """Symbols and table levels of a raster grid; also returns the real-valued predictions."""
    grid = grid_for(PIXEL)
    A, B, C, D = neighbor_planes(pixels)
    x = np.asarray(pixels, dtype=np.int64)
    mu_real = _predict_planes(model.predictor, A, B, C, D)
    mu = np.clip(np.floor(mu_real + 0.5), 0, 255).astype(np.int64)
    wm = model.width
    sign = 1
    if wm.kind is WidthKind.CTX365:
        keys = _ctx_keys(wm.thresholds, A, B, C, D)
        sign = _KEY_SIGN_ARR[keys]
    r = entropy_fold(sign * (x - mu)).ravel()
    u = entropy.zigzag_array(r, 256)
    scale = code_scale(wm.kappa)
    if model.adaptive:
        levels = adaptive_levels(r, grid, wm.kappa)
    else:
        if wm.kind is WidthKind.SINGLE:
            b = np.full(x.size, wm.b)
        elif wm.kind is WidthKind.CTX365:
            b = np.asarray(wm.table)[_KEY_INDEX_ARR[keys.ravel()]]
        else:
            feats = [f.ravel() for f in _linear_features(wm.kind, A, B, C, D)]
            b = _thetas_to_b(_linear_scale(wm.beta, feats), wm.kappa)
        levels = grid.level_indices(b * scale)
    return Stream(grid, u, levels), mu_real


def decode_raster(h: int, w: int, model: RasterModel, reader) -> np.ndarray:
    grid = grid_for(PIXEL)
    mid = grid.midpoints
    read = reader.read
    wm = model.width
    kind = wm.kind
    kappa = wm.kappa
    scale = code_scale(kappa)
    is_med = model.predictor.kind is PredictorKind.MED
    a0, a1, a2, a3 = model.predictor.weights or (0.0, 0.0, 0.0, 0.0)
    adaptive = model.adaptive
    track = AdaptiveScale(kappa) if adaptive else None
    const_level = None
    if not adaptive and kind is WidthKind.SINGLE:
        const_level = bisect_right(mid, wm.b * scale)
    if kind is WidthKind.CTX365:
        lut0, lut1, lut2 = ctx365_luts(wm.thresholds)
        key_level = [bisect_right(mid, wm.table[_KEY_INDEX[k]] * scale) for k in range(729)]
        key_sign = _KEY_SIGN
    lin = kind in (WidthKind.LIN4, WidthKind.LIN11)
    lin11 = kind is WidthKind.LIN11
    beta = wm.beta or ()
    floor = math.floor

    out = []
    prev = None
    for y in range(h):
        row = [0] * w
        for x in range(w):
            if y == 0:
                if x == 0:
                    a = b = c = d = 127.5
                else:
                    a = b = c = d = row[x - 1]
            else:
                b = prev[x]
                if x == 0:
                    a = c = b
                else:
                    a = row[x - 1]
                    c = prev[x - 1]
                d = prev[x + 1] if x + 1 < w else b
            if is_med:
                if a < b:
                    lo, hi = a, b
                else:
                    lo, hi = b, a
                if c >= hi:
                    mu = lo
                elif c <= lo:
                    mu = hi
                else:
                    mu = a + b - c
            else:
                mu = a0 * a + a1 * b + a2 * c + a3 * d
            m = floor(mu + 0.5)
            m = 0 if m < 0 else (255 if m > 255 else m)
            sign = 1
            if adaptive:
                level = bisect_right(mid, track.b() * scale)
            elif const_level is not None:
                level = const_level
            elif lin:
                s = beta[0]
                s = s + beta[1] * POW08[int(abs(c - a))]
                s = s + beta[2] * POW08[int(abs(b - c))]
                s = s + beta[3] * POW08[int(abs(d - b))]
                if lin11:
                    for j, v in enumerate((a, b, c, d)):
                        t = (v - 127.5) / 255.0
                        t2 = t * t
                        s = s + beta[4 + j] * (t2 * t2)
                    s = s + beta[8] * POW01[int(abs(c - 2.0 * b + d))]
                    s = s + beta[9] * POW01[int(abs(a - 2.0 * c + b))]
                level = bisect_right(mid, theta_to_b(s, kappa) * scale)
            else:
                key = lut0[int(c - a) + 255] + lut1[int(b - c) + 255] + lut2[int(d - b) + 255]
                level = key_level[key]
                sign = key_sign[key]
            u = read(grid, level)
            if u == 255:
                r = -128
            else:
                r = (u + 1) >> 1 if u & 1 else -(u >> 1)
            row[x] = (m + sign * r) & 255
            if adaptive:
                track.push(r / 255.0)
        out.append(row)
        prev = row
    return np.array(out, dtype=np.int64).reshape(h, w)


# --- Haar detail streams ----------------------------------------------------------------

def fit_detail_models(pyr, share_cycles: bool, linear_width: bool, kappa: float, adaptive: bool) -> list[ScanModel]:
    from .multiscale import fit_scan_models

    models = fit_scan_models(pyr, share_cycles=share_cycles, linear_width=linear_width and not adaptive, kappa=kappa, strict=False)
    if adaptive:
        models = [ScanModel(m.scan, m.cycle, m.alpha, (ADAPTIVE_SEED_B,), False, kappa) for m in models]
    return models


def model_for(models: list[ScanModel], scan: int, cycle: int, shared: bool) -> ScanModel:
    for m in models:
        if m.scan == scan and (shared or m.cycle == cycle):
            return m
    raise DecodeError(f"no model for scan {scan} in cycle {cycle}")


def encode_detail(scan: int, ctx: np.ndarray, target: np.ndarray, model: ScanModel, adaptive: bool) -> Stream:
    grid = grid_for(DETAIL)
    mu = detail_prediction(model.alpha, ctx)
    r = fold_detail(target.ravel().astype(np.int64), mu)
    u = entropy.zigzag_array(r, 512)
    scale = code_scale(model.kappa)
    if adaptive:
        levels = adaptive_levels(r, grid, model.kappa)
    elif not model.linear_width:
        levels = grid.level_indices(np.full(r.size, model.beta[0] * scale))
    else:
        G = width_features(scan, ctx)
        s = model.beta[0] * G[:, 0]
        for j in range(1, len(model.beta)):
            s = s + model.beta[j] * G[:, j]
        levels = grid.level_indices(_thetas_to_b(s, model.kappa) * scale)
    return Stream(grid, u, levels)


def detail_streams(pyr, models: list[ScanModel], shared: bool, adaptive: bool) -> list[Stream]:
    from .multiscale import scan_context_matrix, scan_target

    out = []
    for c in range(1, pyr.k + 1):
        for scan in (SCAN_DH, SCAN_DVL, SCAN_DVR):
            m = model_for(models, scan, c, shared)
            out.append(encode_detail(scan, scan_context_matrix(pyr, scan, c), scan_target(pyr, scan, c), m, adaptive))
    return out


class _DetailDecoder:
    """Sequential decoder for one detail scan in raster order."""

    def __init__(self, model: ScanModel, adaptive: bool, reader):
        self.grid = grid_for(DETAIL)
        self.model = model
        self.read = reader.read
        self.scale = code_scale(model.kappa)
        self.track = AdaptiveScale(model.kappa) if adaptive else None
        self.const_level = None
        if not adaptive and not model.linear_width:
            self.const_level = bisect_right(self.grid.midpoints, model.beta[0] * self.scale)

    def value(self, ctx: list, rel: tuple, raw: tuple) -> int:
        alpha = self.model.alpha
        mu = alpha[0] * ctx[0]
        for j in range(1, len(alpha)):
            mu = mu + alpha[j] * ctx[j]
        m = math.floor(mu + 0.5)
        m = -255 if m < -255 else (255 if m > 255 else m)
        if self.track is not None:
            level = bisect_right(self.grid.midpoints, self.track.b() * self.scale)
        elif self.const_level is not None:
            level = self.const_level
        else:
            beta = self.model.beta
            ref = ctx[0]
            s = beta[0] * 1.0
            j = 1
            for k in rel:
                s = s + beta[j] * POW08[int(abs(ctx[k] - ref))]
                j += 1
            for k in raw:
                s = s + beta[j] * POW08[int(abs(ctx[k]))]
                j += 1
            level = bisect_right(self.grid.midpoints, theta_to_b(s, self.model.kappa) * self.scale)
        u = self.read(self.grid, level)
        if u == 511:
            r = -256
        else:
            r = (u + 1) >> 1 if u & 1 else -(u >> 1)
        if self.track is not None:
            self.track.push(r / 255.0)
        return (r + m + 256) % 512 - 256


def decode_cycle(A: np.ndarray, models, cycle: int, shared: bool, adaptive: bool, reader) -> np.ndarray:
    """Decode the three detail scans of one cycle and return the next finer average grid."""
    h, w = A.shape
    Al = A.tolist()

    dec = _DetailDecoder(model_for(models, SCAN_DH, cycle, shared), adaptive, reader)
    dH = [[0] * w for _ in range(h)]
    rel, raw = (1, 2, 3), (4,)
    for i in range(h):
        Ai = Al[i]
        up = Al[i - 1] if i else None
        for j in range(w):
            a = Ai[j]
            ctx = [
                a,
                Ai[j - 1] if j else a,
                Ai[j + 1] if j + 1 < w else a,
                up[j] if i else a,
                dH[i - 1][j] if i else 0,
            ]
            dH[i][j] = dec.value(ctx, rel, raw)
    dH_arr = np.array(dH, dtype=np.int64).reshape(h, w)
    aL_arr, aR_arr = _unlift(A, dH_arr)
    aL, aR = aL_arr.tolist(), aR_arr.tolist()

    dec = _DetailDecoder(model_for(models, SCAN_DVL, cycle, shared), adaptive, reader)
    dVl = [[0] * w for _ in range(h)]
    rel, raw = (1, 2, 3, 4), (5,)
    for i in range(h):
        for j in range(w):
            ref = aL[i][j]
            ctx = [
                ref,
                aL[i - 1][j] if i else ref,
                aL[i + 1][j] if i + 1 < h else ref,
                aR[i][j],
                aR[i][j - 1] if j else ref,
                dVl[i - 1][j] if i else 0,
            ]
            dVl[i][j] = dec.value(ctx, rel, raw)

    dec = _DetailDecoder(model_for(models, SCAN_DVR, cycle, shared), adaptive, reader)
    dVr = [[0] * w for _ in range(h)]
    raw = (5, 6)
    for i in range(h):
        for j in range(w):
            ref = aR[i][j]
            ctx = [
                ref,
                aR[i - 1][j] if i else ref,
                aR[i + 1][j] if i + 1 < h else ref,
                aL[i][j],
                aL[i][j + 1] if j + 1 < w else ref,
                dVr[i - 1][j] if i else 0,
                dVl[i][j],
            ]
            dVr[i][j] = dec.value(ctx, rel, raw)

    dVl_arr = np.array(dVl, dtype=np.int64).reshape(h, w)
    dVr_arr = np.array(dVr, dtype=np.int64).reshape(h, w)
    out = inverse_level(A, dH_arr, dVl_arr, dVr_arr)
    if out.min() < 0 or out.max() > 255:
        raise DecodeError("decoded Haar values out of pixel range")
    return out


# --- entropy coder front ends ---------------------------------------------------------------

def _codeword_table(grid: BGrid) -> list[list[str] | None]:
    tab = getattr(grid, "_codewords", None)
    if tab is None:
        tab = grid._codewords = [None] * grid.n_levels
    return tab


def golomb_payload(streams: list[Stream]) -> tuple[bytes, int]:
    """Concatenated Golomb codewords (MSB first, zero padded) and the exact bit count."""
    parts = []
    for st in streams:
        tab = _codeword_table(st.grid)
        raw = st.grid.alphabet.raw_bits
        for lv in np.unique(st.levels).tolist():
            if tab[lv] is None:
                m = st.grid.golomb_m(lv)
                tab[lv] = [entropy.golomb_encode(u, m, raw) for u in range(st.grid.alphabet.size)]
        parts.extend(tab[lv][u] for u, lv in zip(st.symbols.tolist(), st.levels.tolist()))
    bits = "".join(parts)
    nbits = len(bits)
    bits += "0" * (-nbits % 8)
    payload = int(bits, 2).to_bytes(len(bits) // 8, "big") if bits else b""
    return payload, nbits


def _freq_arrays(grid: BGrid) -> tuple[np.ndarray, np.ndarray]:
    arr = getattr(grid, "_freq_arrays", None)
    if arr is None:
        cum = np.array([grid.cumulative(lv) for lv in range(grid.n_levels)], dtype=np.int64)
        arr = grid._freq_arrays = (cum[:, :-1], np.diff(cum, axis=1))
    return arr


def accurate_payload(streams: list[Stream]) -> bytes:
    starts, freqs = [], []
    for st in streams:
        cs, fr = _freq_arrays(st.grid)
        starts.append(cs[st.levels, st.symbols])
        freqs.append(fr[st.levels, st.symbols])
    if not starts:
        return entropy.rans_encode([])
    pairs = list(zip(np.concatenate(starts).tolist(), np.concatenate(freqs).tolist()))
    return entropy.rans_encode(pairs)


def ideal_bits(streams: list[Stream]) -> float:
    """Cross-entropy of the streams under their coding tables."""
    total = 0.0
    for st in streams:
        _, fr = _freq_arrays(st.grid)
        p = fr[st.levels, st.symbols]
        total += float(np.sum(entropy.PROB_BITS - np.log2(p)))
    return total


class GolombReader:
    def __init__(self, payload: bytes):
        self.bits = entropy.bytes_to_bits(payload)
        self.pos = 0
        self.count = 0

    def read(self, grid: BGrid, level: int) -> int:
        m = grid.golomb_m(level)
        raw = grid.alphabet.raw_bits
        u, self.pos = entropy.golomb_decode(self.bits, self.pos, m, raw)
        if u >= grid.alphabet.size:
            raise DecodeError("Golomb escape value outside the alphabet")
        self.count += 1
        return u

    def finish(self) -> None:
        rest = self.bits[self.pos :]
        if len(rest) >= 8 or "1" in rest:
            raise DecodeError("trailing data after Golomb payload")


class RansReader:
    def __init__(self, payload: bytes):
        self.dec = entropy.RansDecoder(payload)
        self.count = 0
        self._tables: dict[int, tuple[list, list]] = {}

    def read(self, grid: BGrid, level: int) -> int:
        key = grid.alphabet.size * 64 + level
        t = self._tables.get(key)
        if t is None:
            t = self._tables[key] = (grid.cumulative(level), grid.freqs(level))
        self.count += 1
        return self.dec.decode(*t)

    def finish(self) -> None:
        self.dec.finish()
