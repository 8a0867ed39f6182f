"""Laplace scale models: single b, LOCO-I style 365 contexts, linear basis models."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .linalg import normal_solve
from .pixio import Ctx4

B_FLOOR = 0.001
EPD_FLOOR = 1e-6
KAPPA_GRID = (0.5, 1.0, 1.5, 2.0)
SHRINK_N0 = 2
N_CONTEXTS = 365


class WidthKind(Enum):
    SINGLE = 0
    CTX365 = 1
    LIN4 = 2
    LIN11 = 3


# LIN11 keeps its customary name but has the 10 listed components.
BASIS_DIM = {WidthKind.LIN4: 4, WidthKind.LIN11: 10}


class QuantizedCtx(NamedTuple):
    index: int
    sign: int


@dataclass(frozen=True)
class WidthModel:
    kind: WidthKind
    b: float | None = None
    thresholds: tuple[tuple[float, ...], ...] | None = None
    table: tuple[float, ...] | None = None
    beta: tuple[float, ...] | None = None
    kappa: float = 1.0

    def __post_init__(self):
        if self.kappa not in KAPPA_GRID:
            raise ValueError(f"kappa must be one of {KAPPA_GRID}, got {self.kappa}")
        if self.kind is WidthKind.SINGLE:
            if self.b is None or not self.b > 0:
                raise ValueError("SINGLE width model needs b > 0")
        elif self.kind is WidthKind.CTX365:
            if self.thresholds is None or len(self.thresholds) != 3:
                raise ValueError("CTX365 needs 3 threshold channels")
            for ch in self.thresholds:
                if len(ch) != 8 or any(b <= a for a, b in zip(ch, ch[1:])):
                    raise ValueError("thresholds must be 8 strictly ascending values per channel")
                if any(ch[i] != -ch[7 - i] for i in range(8)):
                    raise ValueError("thresholds must be sign-symmetric")
            if self.table is None or len(self.table) != N_CONTEXTS or min(self.table) <= 0:
                raise ValueError("CTX365 table must hold 365 positive entries")
        else:
            if self.beta is None or len(self.beta) != BASIS_DIM[self.kind]:
                raise ValueError(f"{self.kind.name} needs {BASIS_DIM.get(self.kind)} coefficients")


def _pow(x: float, e: float) -> float:
    return math.pow(x, e) if x > 0.0 else 0.0


def basis_b4(c: Ctx4) -> tuple[float, float, float, float]:
    A, B, C, D = c
    return (1.0, _pow(abs(C - A), 0.8), _pow(abs(B - C), 0.8), _pow(abs(D - B), 0.8))


def basis_b11(c: Ctx4) -> tuple[float, ...]:
    A, B, C, D = c
    quartic = tuple((v - 0.5) ** 4 for v in (A, B, C, D))
    return (
        basis_b4(c)
        + quartic
        + (_pow(abs(C - 2 * B + D), 0.1), _pow(abs(A - 2 * C + B), 0.1))
    )


def basis_for(kind: WidthKind):
    return {WidthKind.LIN4: basis_b4, WidthKind.LIN11: basis_b11}[kind]


def theta_to_b(theta: float, kappa: float) -> float:
    """Map a fitted ``b**kappa`` value back to a positive scale."""
    if kappa == 1.0:
        return max(theta, B_FLOOR)
    return max(math.pow(max(theta, EPD_FLOOR), 1.0 / kappa), B_FLOOR)


# --- 365-context quantization -------------------------------------------------

def _canonical(levels: tuple[int, int, int]) -> tuple[tuple[int, int, int], int]:
    for v in levels:
        if v < 0:
            return (-levels[0], -levels[1], -levels[2]), -1
        if v > 0:
            break
    return levels, 1


def _build_triple_index() -> dict[tuple[int, int, int], QuantizedCtx]:
    canon = sorted({_canonical(t)[0] for t in itertools.product(range(-4, 5), repeat=3)})
    rank = {t: i for i, t in enumerate(canon)}
    out = {}
    for t in itertools.product(range(-4, 5), repeat=3):
        ct, sign = _canonical(t)
        out[t] = QuantizedCtx(rank[ct], sign)
    return out


TRIPLE_INDEX = _build_triple_index()


def level_of(thresholds: Sequence[float], d: float) -> int:
    """Signed level in -4..4 of one difference; symmetric in ``d``."""
    pos = thresholds[4:]
    mag = abs(d)
    k = 0
    for t in pos:
        if mag > t:
            k += 1
    return k if d >= 0 else -k


def quantize_ctx(thresholds, c: Ctx4) -> QuantizedCtx:
    A, B, C, D = c
    levels = (
        level_of(thresholds[0], C - A),
        level_of(thresholds[1], B - C),
        level_of(thresholds[2], D - B),
    )
    return TRIPLE_INDEX[levels]


def context_differences(P: np.ndarray) -> np.ndarray:
    """Signed (C-A, B-C, D-B) for an ``(n, 4)`` context array."""
    P = np.asarray(P, dtype=np.float64)
    return np.stack([P[:, 2] - P[:, 0], P[:, 1] - P[:, 2], P[:, 3] - P[:, 1]], axis=1)


_MIN_GAP = 1.0 / 512


def thresholds_from_differences(diffs: np.ndarray) -> tuple[tuple[float, ...], ...]:
    diffs = np.asarray(diffs, dtype=np.float64)
    out = []
    for ch in range(3):
        col = diffs[:, ch]
        if col.size:
            q = np.quantile(col, [k / 9 for k in range(1, 9)])
        else:
            q = np.zeros(8)
        pos = []
        prev = 0.0
        for j in range(4):
            t = max(abs(q[4 + j]), abs(q[3 - j]))
            # strictly ascending; with integer pixel data this never moves a level boundary
            t = max(t, prev + _MIN_GAP)
            pos.append(float(t))
            prev = t
        out.append(tuple([-t for t in reversed(pos)] + pos))
    return tuple(out)


def fit_thresholds(samples: Iterable[Ctx4]) -> tuple[tuple[float, ...], ...]:
    P = np.array([tuple(c) for c in samples], dtype=np.float64).reshape(-1, 4)
    return thresholds_from_differences(context_differences(P))


def level_array(thresholds: Sequence[float], d: np.ndarray) -> np.ndarray:
    pos = np.asarray(thresholds[4:], dtype=np.float64)
    mag = np.abs(d)
    k = (mag[..., None] > pos).sum(axis=-1)
    return np.where(d >= 0, k, -k)


_TRIPLE_LUT_INDEX = np.zeros((9, 9, 9), dtype=np.int64)
_TRIPLE_LUT_SIGN = np.zeros((9, 9, 9), dtype=np.int64)
for (_l1, _l2, _l3), _q in TRIPLE_INDEX.items():
    _TRIPLE_LUT_INDEX[_l1 + 4, _l2 + 4, _l3 + 4] = _q.index
    _TRIPLE_LUT_SIGN[_l1 + 4, _l2 + 4, _l3 + 4] = _q.sign


def quantize_differences(thresholds, diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`quantize_ctx` over signed difference triples."""
    l = [level_array(thresholds[ch], diffs[:, ch]) + 4 for ch in range(3)]
    return _TRIPLE_LUT_INDEX[l[0], l[1], l[2]], _TRIPLE_LUT_SIGN[l[0], l[1], l[2]]


def ctx365_table(index: np.ndarray, targets: np.ndarray, n0: int = SHRINK_N0) -> np.ndarray:
    """Per-context mean of ``targets`` shrunk toward the global mean with ``n0`` pseudo-counts."""
    targets = np.asarray(targets, dtype=np.float64)
    g = float(targets.mean()) if targets.size else 0.0
    sums = np.bincount(index, weights=targets, minlength=N_CONTEXTS)
    counts = np.bincount(index, minlength=N_CONTEXTS)
    return (sums + n0 * g) / (counts + n0)


def fit_ctx365(samples, thresholds=None, kappa: float = 1.0) -> WidthModel:
    """Fit the 365-context table from ``(ctx, |r|)`` pairs.

    Entries are stored as scales ``b``; with ``kappa != 1`` averaging happens
    on ``|r|**kappa`` before mapping back.
    """
    samples = list(samples)
    P = np.array([tuple(c) for c, _ in samples], dtype=np.float64).reshape(-1, 4)
    r = np.array([v for _, v in samples], dtype=np.float64)
    return fit_ctx365_arrays(context_differences(P), r, thresholds, kappa)


def fit_ctx365_arrays(diffs, abs_r, thresholds=None, kappa: float = 1.0) -> WidthModel:
    if thresholds is None:
        thresholds = thresholds_from_differences(diffs)
    index, _ = quantize_differences(thresholds, np.asarray(diffs))
    theta = ctx365_table(index, np.abs(abs_r) ** kappa)
    table = tuple(theta_to_b(float(t), kappa) for t in theta)
    return WidthModel(WidthKind.CTX365, thresholds=thresholds, table=table, kappa=kappa)


def fit_linear_width(basis: WidthKind, samples, kappa: float = 1.0) -> WidthModel:
    samples = list(samples)
    fn = basis_for(basis)
    S = np.array([fn(c) for c, _ in samples], dtype=np.float64).reshape(-1, BASIS_DIM[basis])
    r = np.array([v for _, v in samples], dtype=np.float64)
    return fit_linear_width_arrays(basis, S, r, kappa)


def fit_linear_width_arrays(basis: WidthKind, S, abs_r, kappa: float = 1.0) -> WidthModel:
    target = np.abs(np.asarray(abs_r, dtype=np.float64))
    if kappa != 1.0:
        target = target**kappa
    beta = normal_solve(S, target)
    return WidthModel(basis, beta=tuple(beta.tolist()), kappa=kappa)


def epd_fit(samples, kappa: float, basis: WidthKind = WidthKind.LIN4) -> WidthModel:
    """Exponential-power generalization: regress ``|r|**kappa`` so the model predicts ``b**kappa``."""
    return fit_linear_width(basis, samples, kappa=kappa)


def fit_single(abs_r, kappa: float = 1.0) -> WidthModel:
    r = np.abs(np.asarray(abs_r, dtype=np.float64))
    theta = float(np.mean(r**kappa)) if r.size else 0.0
    return WidthModel(WidthKind.SINGLE, b=theta_to_b(theta, kappa), kappa=kappa)


def predict_b(m: WidthModel, c: Ctx4) -> float:
    if m.kind is WidthKind.SINGLE:
        return m.b
    if m.kind is WidthKind.CTX365:
        return m.table[quantize_ctx(m.thresholds, c).index]
    g = basis_for(m.kind)(c)
    s = 0.0
    for beta, gj in zip(m.beta, g):
        s += beta * gj
    return theta_to_b(s, m.kappa)


def laplace_mle(values: Sequence[float]) -> tuple[float, float]:
    """Median (lower median for even n) and mean absolute deviation."""
    xs = sorted(values)
    if not xs:
        raise ValueError("laplace_mle needs a nonempty sample")
    mu = xs[(len(xs) - 1) // 2]
    return mu, sum(abs(x - mu) for x in xs) / len(xs)


def epd_mean_abs_factor(kappa: float) -> float:
    """E|r| / b for an exponential power distribution of shape ``kappa``.

    Used to pick the Laplace coding table whose mean absolute residue matches
    the estimated distribution.
    """
    return math.pow(kappa, 1.0 / kappa) * math.gamma(2.0 / kappa) / math.gamma(1.0 / kappa)
