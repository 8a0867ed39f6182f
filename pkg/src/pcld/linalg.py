"""Normal-equation least squares shared by every fitter."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateFitError

RIDGE = 1e-9


def normal_solve(
    design: np.ndarray, target: np.ndarray, weights: np.ndarray | None = None, strict: bool = True
) -> np.ndarray:
    """Solve ``(S^T W S) beta = S^T W y``.

    A ridge of ``RIDGE * I`` is added only when the Gram matrix is rank
    deficient, so well-posed fits are untouched. ``strict=False`` also accepts
    fewer rows than parameters (the codec must fit even 1x1 grids).
    """
    S = np.asarray(design, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if S.ndim != 2:
        raise ValueError("design matrix must be 2-D")
    n, d = S.shape
    if strict and n < d:
        raise DegenerateFitError(f"degenerate context sample: {n} rows for {d} parameters")
    if weights is None:
        gram = S.T @ S
        rhs = S.T @ y
    else:
        w = np.asarray(weights, dtype=np.float64)
        gram = (S * w[:, None]).T @ S
        rhs = (S * w[:, None]).T @ y
    if np.linalg.matrix_rank(gram) < d:
        gram = gram + RIDGE * np.eye(d)
    return np.linalg.solve(gram, rhs)
