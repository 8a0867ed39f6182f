"""Pixel predictors: LOCO-I median edge detector, average, fitted linear."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateFitError
from .linalg import normal_solve
from .pixio import Ctx4, Image, contexts


class PredictorKind(Enum):
    MED = 0
    AVG = 1
    LINEAR = 2


@dataclass(frozen=True)
class PredictorParams:
    kind: PredictorKind
    alpha: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.kind is PredictorKind.LINEAR:
            if self.alpha is None or len(self.alpha) != 4:
                raise ValueError("LINEAR predictor needs 4 coefficients")
            if not all(np.isfinite(self.alpha)):
                raise ValueError("predictor coefficients must be finite")
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))

    @property
    def weights(self) -> tuple[float, float, float, float] | None:
        """Linear weights, or None for the nonlinear MED predictor."""
        if self.kind is PredictorKind.LINEAR:
            return self.alpha
        if self.kind is PredictorKind.AVG:
            return AVG_ALPHA
        return None


AVG_ALPHA = (0.5, 0.5, 0.0, 0.0)
MED = PredictorParams(PredictorKind.MED)
AVG = PredictorParams(PredictorKind.AVG)


def med_predict(c: Ctx4) -> float:
    a, b, cc = c[0], c[1], c[2]
    if cc >= max(a, b):
        return min(a, b)
    if cc <= min(a, b):
        return max(a, b)
    return min(1.0, max(0.0, a + b - cc))


def linear_predict(p: PredictorParams, c: Ctx4) -> float:
    alpha = p.weights
    if alpha is None:
        raise ValueError("linear_predict needs a LINEAR or AVG predictor")
    return alpha[0] * c[0] + alpha[1] * c[1] + alpha[2] * c[2] + alpha[3] * c[3]


def predict(p: PredictorParams, c: Ctx4) -> float:
    if p.kind is PredictorKind.MED:
        return med_predict(c)
    return linear_predict(p, c)


def fit_linear_predictor(samples: Iterable[tuple[Sequence[float], float]]) -> PredictorParams:
    """Least-squares weights for ``x ~ alpha . (A, B, C, D)`` (no intercept)."""
    samples = list(samples)
    if len(samples) < 4:
        raise DegenerateFitError(f"degenerate context sample: need at least 4 samples, got {len(samples)}")
    P = np.array([tuple(c) for c, _ in samples], dtype=np.float64)
    x = np.array([v for _, v in samples], dtype=np.float64)
    return fit_linear_predictor_arrays(P, x)


def fit_linear_predictor_arrays(P: np.ndarray, x: np.ndarray) -> PredictorParams:
    alpha = normal_solve(P, x)
    return PredictorParams(PredictorKind.LINEAR, tuple(alpha.tolist()))


def image_samples(img: Image) -> tuple[np.ndarray, np.ndarray]:
    """Context matrix ``(n, 4)`` and normalized targets for every pixel."""
    return contexts(img), img.pixels.ravel().astype(np.float64) / 255.0


def fit_image_predictor(img: Image) -> PredictorParams:
    return fit_linear_predictor_arrays(*image_samples(img))


def med_predict_array(P: np.ndarray) -> np.ndarray:
    A, B, C = P[:, 0], P[:, 1], P[:, 2]
    lo = np.minimum(A, B)
    hi = np.maximum(A, B)
    mid = np.clip(A + B - C, 0.0, 1.0)
    return np.where(C >= hi, lo, np.where(C <= lo, hi, mid))


def predict_array(p: PredictorParams, P: np.ndarray) -> np.ndarray:
    if p.kind is PredictorKind.MED:
        return med_predict_array(P)
    a = p.weights
    return a[0] * P[:, 0] + a[1] * P[:, 1] + a[2] * P[:, 2] + a[3] * P[:, 3]


def mean_abs_error(p: PredictorParams, samples) -> float:
    """Average ``|x - mu(c)|`` over ``(ctx, x)`` pairs."""
    samples = list(samples)
    if not samples:
        raise ValueError("mean_abs_error needs a nonempty sample")
    return sum(abs(x - predict(p, c)) for c, x in samples) / len(samples)


def image_mae(p: PredictorParams, img: Image) -> float:
    """Mean absolute prediction error on the 0..255 scale."""
    P, x = image_samples(img)
    return float(np.mean(np.abs(x - predict_array(p, P)))) * 255.0
