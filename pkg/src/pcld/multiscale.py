"""Reversible Haar upscale scan: integer lifting pyramid, causal scan contexts and per-scan models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .linalg import normal_solve
from .pixio import Image, neighbor_planes
from .width import B_FLOOR, theta_to_b

MAX_CYCLES = 15

# Scan types within a cycle.
SCAN0, SCAN_DH, SCAN_DVL, SCAN_DVR = 0, 1, 2, 3
SCAN_NAMES = {SCAN0: "scan0", SCAN_DH: "dH", SCAN_DVL: "dV_left", SCAN_DVR: "dV_right"}

# Context width per scan type, and which components enter the width basis as
# differences against component 0 ("rel") or as raw detail magnitudes ("raw").
SCAN_DIM = {SCAN0: 4, SCAN_DH: 5, SCAN_DVL: 6, SCAN_DVR: 7}
_REL = {SCAN_DH: (1, 2, 3), SCAN_DVL: (1, 2, 3, 4), SCAN_DVR: (1, 2, 3, 4)}
_RAW = {SCAN_DH: (4,), SCAN_DVL: (5,), SCAN_DVR: (5, 6)}

# |k / 255| ** 0.8 for integer k in 0..510, shared by encoder and decoder.
POW08 = [math.pow(k / 255.0, 0.8) if k else 0.0 for k in range(511)]
POW08_ARR = np.array(POW08)


def haar_forward_block(v00: int, v01: int, v10: int, v11: int) -> tuple[int, int, int, int]:
    """S-transform lifting of a 2x2 block into ``(a, dH, dV_left, dV_right)``.

    ``v00 v01`` is the top row, ``v10 v11`` the bottom row.
    """
    aL = (v00 + v10) >> 1
    aR = (v01 + v11) >> 1
    a = (aL + aR) >> 1
    return a, aL - aR, v00 - v10, v01 - v11


def _unlift(avg, diff):
    hi = avg + ((diff + 1) >> 1)
    return hi, hi - diff


def haar_inverse_block(a: int, dH: int, dVl: int, dVr: int) -> tuple[int, int, int, int]:
    aL, aR = _unlift(a, dH)
    v00, v10 = _unlift(aL, dVl)
    v01, v11 = _unlift(aR, dVr)
    return v00, v01, v10, v11


@dataclass
class HaarPyramid:
    """Coarse-to-fine decomposition of a padded image.

    ``averages[c]`` is the average grid entering cycle ``c + 1`` (``averages[0]``
    is scan 0); ``details[c]`` holds the ``(dH, dV_left, dV_right)`` grids of cycle
    ``c + 1``, all at the shape of ``averages[c]``.
    """

    k: int
    width: int
    height: int
    averages: list[np.ndarray] = field(default_factory=list)
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def scan0(self) -> np.ndarray:
        return self.averages[0]

    @property
    def padded_shape(self) -> tuple[int, int]:
        h, w = self.scan0.shape
        return h << self.k, w << self.k

    def column_averages(self, cycle: int) -> tuple[np.ndarray, np.ndarray]:
        """Left/right column averages ``(aL, aR)`` of cycle ``cycle`` (1-based)."""
        A = self.averages[cycle - 1]
        dH = self.details[cycle - 1][0]
        return _unlift(A, dH)


def padded_size(n: int, k: int) -> int:
    step = 1 << k
    return -(-n // step) * step


def check_cycles(k: int) -> None:
    if not 1 <= k <= MAX_CYCLES:
        raise ConfigError(f"cycle count must lie in 1..{MAX_CYCLES}, got {k}")


def forward_level(L: np.ndarray):
    v00, v01 = L[0::2, 0::2], L[0::2, 1::2]
    v10, v11 = L[1::2, 0::2], L[1::2, 1::2]
    aL = (v00 + v10) >> 1
    aR = (v01 + v11) >> 1
    return (aL + aR) >> 1, aL - aR, v00 - v10, v01 - v11


def inverse_level(A, dH, dVl, dVr) -> np.ndarray:
    aL, aR = _unlift(A, dH)
    v00, v10 = _unlift(aL, dVl)
    v01, v11 = _unlift(aR, dVr)
    h, w = A.shape
    out = np.empty((2 * h, 2 * w), dtype=np.int64)
    out[0::2, 0::2] = v00
    out[0::2, 1::2] = v01
    out[1::2, 0::2] = v10
    out[1::2, 1::2] = v11
    return out


def build_pyramid(img: Image, k: int) -> HaarPyramid:
    check_cycles(k)
    ph, pw = padded_size(img.height, k), padded_size(img.width, k)
    L = np.pad(img.pixels.astype(np.int64), ((0, ph - img.height), (0, pw - img.width)), mode="edge")
    levels = []
    for _ in range(k):
        A, dH, dVl, dVr = forward_level(L)
        levels.append((A, (dH, dVl, dVr)))
        L = A
    levels.reverse()
    return HaarPyramid(
        k=k,
        width=img.width,
        height=img.height,
        averages=[A for A, _ in levels],
        details=[d for _, d in levels],
    )


def reconstruct(pyr: HaarPyramid) -> Image:
    L = pyr.scan0
    for dH, dVl, dVr in pyr.details:
        L = inverse_level(L, dH, dVl, dVr)
    return Image(L[: pyr.height, : pyr.width])


# --- scan contexts ------------------------------------------------------------------

def scan_order_key(source: tuple) -> tuple[int, int, int, int]:
    """Decode-order key of a context source; smaller keys are decoded earlier."""
    kind = source[0]
    if kind == "const":
        return (-1, 0, 0, 0)
    if kind == "s0":
        return (0, SCAN0, source[1], source[2])
    if kind == "a":
        # the whole average grid of cycle c is complete once cycle c-1 ends
        return (source[1] - 1, 4, 0, 0)
    if kind in ("aL", "aR"):
        return (source[1], SCAN_DH, source[2], source[3])
    stream = {"dH": SCAN_DH, "dVl": SCAN_DVL, "dVr": SCAN_DVR}[kind]
    return (source[1], stream, source[2], source[3])


def context_sources(scan: int, cycle: int, i: int, j: int, shape: tuple[int, int]) -> list[tuple]:
    """Where each context component of a target comes from.

    Entries are ``("const", v)``, ``("s0", i, j)`` or ``(kind, cycle, i, j)`` with
    kind in ``a, aL, aR, dH, dVl, dVr``. Missing neighbors fall back to the
    component-0 reference (averages) or to zero (details).
    """
    h, w = shape
    if scan == SCAN0:
        if i == 0:
            if j == 0:
                return [("const", 127.5)] * 4
            return [("s0", 0, j - 1)] * 4
        b = ("s0", i - 1, j)
        a = ("s0", i, j - 1) if j > 0 else b
        c = ("s0", i - 1, j - 1) if j > 0 else b
        d = ("s0", i - 1, j + 1) if j + 1 < w else b
        return [a, b, c, d]

    def grid(kind, ii, jj, ref):
        if 0 <= ii < h and 0 <= jj < w:
            return (kind, cycle, ii, jj)
        return ref

    zero = ("const", 0.0)
    if scan == SCAN_DH:
        ref = ("a", cycle, i, j)
        return [
            ref,
            grid("a", i, j - 1, ref),
            grid("a", i, j + 1, ref),
            grid("a", i - 1, j, ref),
            grid("dH", i - 1, j, zero),
        ]
    if scan == SCAN_DVL:
        ref = ("aL", cycle, i, j)
        return [
            ref,
            grid("aL", i - 1, j, ref),
            grid("aL", i + 1, j, ref),
            ("aR", cycle, i, j),
            grid("aR", i, j - 1, ref),
            grid("dVl", i - 1, j, zero),
        ]
    if scan == SCAN_DVR:
        ref = ("aR", cycle, i, j)
        return [
            ref,
            grid("aR", i - 1, j, ref),
            grid("aR", i + 1, j, ref),
            ("aL", cycle, i, j),
            grid("aL", i, j + 1, ref),
            grid("dVr", i - 1, j, zero),
            ("dVl", cycle, i, j),
        ]
    raise ValueError(f"unknown scan type {scan}")


def _resolve(pyr: HaarPyramid, src: tuple) -> float:
    kind = src[0]
    if kind == "const":
        return float(src[1])
    if kind == "s0":
        return float(pyr.scan0[src[1], src[2]])
    _, c, i, j = src
    if kind == "a":
        return float(pyr.averages[c - 1][i, j])
    if kind in ("aL", "aR"):
        aL, aR = pyr.column_averages(c)
        return float((aL if kind == "aL" else aR)[i, j])
    idx = {"dH": 0, "dVl": 1, "dVr": 2}[kind]
    return float(pyr.details[c - 1][idx][i, j])


def scan_context(pyr: HaarPyramid, scan: int, position: tuple[int, int], cycle: int = 0) -> list[float]:
    """Normalized context vector (values / 255) of one target in a scan."""
    shape = pyr.scan0.shape if scan == SCAN0 else pyr.averages[cycle - 1].shape
    return [_resolve(pyr, s) / 255.0 for s in context_sources(scan, cycle, *position, shape)]


def scan_target(pyr: HaarPyramid, scan: int, cycle: int = 0) -> np.ndarray:
    if scan == SCAN0:
        return pyr.scan0
    return pyr.details[cycle - 1][scan - 1]


def _shift(X, di, dj, fill):
    """``out[i, j] = X[i + di, j + dj]`` where inside, else ``fill[i, j]``."""
    out = np.array(fill, dtype=X.dtype, copy=True)
    h, w = X.shape
    rs = slice(max(0, -di), h - max(0, di))
    cs = slice(max(0, -dj), w - max(0, dj))
    rt = slice(max(0, di), h - max(0, -di))
    ct = slice(max(0, dj), w - max(0, -dj))
    out[rs, cs] = X[rt, ct]
    return out


def detail_context_planes(scan: int, A, dH, aL, aR, dVl, dVr) -> list[np.ndarray]:
    """Vectorized contexts (pixel units) for every target of one detail scan."""
    zero = np.zeros_like(A)
    if scan == SCAN_DH:
        return [A, _shift(A, 0, -1, A), _shift(A, 0, 1, A), _shift(A, -1, 0, A), _shift(dH, -1, 0, zero)]
    if scan == SCAN_DVL:
        return [aL, _shift(aL, -1, 0, aL), _shift(aL, 1, 0, aL), aR, _shift(aR, 0, -1, aL), _shift(dVl, -1, 0, zero)]
    if scan == SCAN_DVR:
        return [aR, _shift(aR, -1, 0, aR), _shift(aR, 1, 0, aR), aL, _shift(aL, 0, 1, aR), _shift(dVr, -1, 0, zero), dVl]
    raise ValueError(f"unknown detail scan {scan}")


def scan_context_matrix(pyr: HaarPyramid, scan: int, cycle: int = 0) -> np.ndarray:
    """All contexts of a scan in raster order, ``(n, d_s)`` in pixel units."""
    if scan == SCAN0:
        planes = neighbor_planes(pyr.scan0)
    else:
        A = pyr.averages[cycle - 1]
        dH, dVl, dVr = pyr.details[cycle - 1]
        aL, aR = _unlift(A, dH)
        planes = detail_context_planes(scan, A, dH, aL, aR, dVl, dVr)
    return np.stack([np.asarray(p, dtype=np.float64).ravel() for p in planes], axis=1)


def width_features(scan: int, ctx: np.ndarray) -> np.ndarray:
    """Width basis ``[1, |rel diffs|^0.8, |raw details|^0.8]`` from pixel-unit contexts."""
    ctx = np.asarray(ctx)
    cols = [np.ones(ctx.shape[0])]
    for j in _REL[scan]:
        cols.append(POW08_ARR[np.abs(ctx[:, j] - ctx[:, 0]).astype(np.int64)])
    for j in _RAW[scan]:
        cols.append(POW08_ARR[np.abs(ctx[:, j]).astype(np.int64)])
    return np.stack(cols, axis=1)


# --- per-scan models ------------------------------------------------------------------

@dataclass(frozen=True)
class ScanModel:
    """Predictor and width coefficients for one scan (``cycle == 0`` when shared across cycles)."""

    scan: int
    cycle: int
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    linear_width: bool = True
    kappa: float = 1.0

    def __post_init__(self):
        if len(self.alpha) != SCAN_DIM[self.scan]:
            raise ValueError(f"scan {self.scan} needs {SCAN_DIM[self.scan]} predictor weights")


def predict_scan(model: ScanModel, context: Sequence[float]) -> float:
    s = 0.0
    for a, c in zip(model.alpha, context):
        s += a * c
    return s


def scan_width(model: ScanModel, context: Sequence[float]) -> float:
    """Laplace scale for a normalized context."""
    if not model.linear_width:
        return model.beta[0]
    ctx = np.asarray(context, dtype=np.float64)[None, :] * 255.0
    g = width_features(model.scan, np.rint(ctx))[0]
    s = 0.0
    for b, gj in zip(model.beta, g):
        s += b * gj
    return theta_to_b(s, model.kappa)


def fold_detail(d, mu):
    return (d - mu + 256) % 512 - 256


def detail_prediction(alpha: Sequence[float], ctx: np.ndarray) -> np.ndarray:
    """Rounded prediction in pixel units, evaluated in a fixed operation order."""
    mu = alpha[0] * ctx[:, 0]
    for j in range(1, len(alpha)):
        mu = mu + alpha[j] * ctx[:, j]
    return np.clip(np.floor(mu + 0.5), -255, 255).astype(np.int64)


def fit_scan_arrays(
    scan: int, ctx: np.ndarray, target: np.ndarray, linear_width: bool, kappa: float, cycle: int, strict: bool = True
):
    alpha = normal_solve(ctx / 255.0, target.astype(np.float64) / 255.0, strict=strict)
    alpha_t = tuple(alpha.tolist())
    mu = detail_prediction(alpha_t, ctx)
    r = np.abs(fold_detail(target.astype(np.int64), mu)) / 255.0
    tk = r if kappa == 1.0 else r**kappa
    if linear_width:
        beta = tuple(normal_solve(width_features(scan, ctx), tk, strict=strict).tolist())
    else:
        beta = (theta_to_b(float(tk.mean()) if tk.size else 0.0, kappa),)
    return ScanModel(scan, cycle, alpha_t, beta, linear_width, kappa)


def fit_scan_models(
    pyr: HaarPyramid, share_cycles: bool = False, linear_width: bool = True, kappa: float = 1.0, strict: bool = True
) -> list[ScanModel]:
    """Least-squares predictor and width model per detail scan, coarse to fine.

    With ``share_cycles`` one model per scan type is fitted on all cycles pooled.
    """
    models = []
    if share_cycles:
        for scan in (SCAN_DH, SCAN_DVL, SCAN_DVR):
            ctx = np.concatenate([scan_context_matrix(pyr, scan, c) for c in range(1, pyr.k + 1)])
            tgt = np.concatenate([scan_target(pyr, scan, c).ravel() for c in range(1, pyr.k + 1)])
            models.append(fit_scan_arrays(scan, ctx, tgt, linear_width, kappa, 0, strict))
        return models
    for c in range(1, pyr.k + 1):
        for scan in (SCAN_DH, SCAN_DVL, SCAN_DVR):
            ctx = scan_context_matrix(pyr, scan, c)
            models.append(fit_scan_arrays(scan, ctx, scan_target(pyr, scan, c).ravel(), linear_width, kappa, c, strict))
    return models


def scan0_model(pyr: HaarPyramid, kappa: float = 1.0) -> ScanModel:
    """Linear predictor and B4-style width for the coarse average grid."""
    ctx = scan_context_matrix(pyr, SCAN0)
    tgt = pyr.scan0.ravel().astype(np.float64)
    alpha = normal_solve(ctx / 255.0, tgt / 255.0)
    mu = np.clip(np.floor(ctx @ alpha + 0.5), 0, 255).astype(np.int64)
    r = np.abs((pyr.scan0.ravel() - mu + 128) % 256 - 128) / 255.0
    diffs = np.abs(np.stack([ctx[:, 2] - ctx[:, 0], ctx[:, 1] - ctx[:, 2], ctx[:, 3] - ctx[:, 1]], axis=1))
    S = np.concatenate([np.ones((len(r), 1)), POW08_ARR[diffs.astype(np.int64)]], axis=1)
    beta = normal_solve(S, r if kappa == 1.0 else r**kappa)
    return ScanModel(SCAN0, 0, tuple(alpha.tolist()), tuple(beta.tolist()), True, kappa)

