"""Active-set nonnegative least squares (Lawson-Hanson)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NNLSIterationError(RuntimeError):
    """Iteration cap exceeded; ``partial`` holds the last iterate."""

    def __init__(self, message: str, partial: "NNLSResult") -> None:
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class NNLSResult:
    x: np.ndarray
    residual_norm: float
    iterations: int


def _lstsq(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(A, b, rcond=None)[0]


def nnls(A, b, max_iter: int | None = None, tol: float | None = None) -> NNLSResult:
    """Minimize ``||A x - b||`` subject to ``x >= 0``.

    Parameters
    ----------
    A : (m, n) array
    b : (m,) array
    max_iter : int, optional
        Cap on the total number of inner and outer iterations; defaults to
        ``10 * n``. Exceeding it raises :class:`NNLSIterationError`.
    tol : float, optional
        Dual-feasibility tolerance on the gradient ``A^T (b - A x)``.

    Returns
    -------
    NNLSResult
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError("shape mismatch between A and b")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("A and b must be finite")
    max_iter = 10 * n if max_iter is None else max_iter
    if tol is None:
        tol = 10 * max(m, n) * np.finfo(float).eps * max(1.0, np.abs(A).max()) \
            * max(1.0, np.linalg.norm(b))

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    it = 0

    def result() -> NNLSResult:
        return NNLSResult(x.copy(), float(np.linalg.norm(A @ x - b)), it)

    w = A.T @ (b - A @ x)
    while not passive.all():
        cand = np.where(passive, -np.inf, w)
        j = int(np.argmax(cand))
        if cand[j] <= tol:
            break
        it += 1
        if it > max_iter:
            raise NNLSIterationError(f"NNLS exceeded {max_iter} iterations", result())
        passive[j] = True
        s = np.zeros(n)
        s[passive] = _lstsq(A[:, passive], b)
        if s[j] <= 0:
            # Rounding made the entering column useless; skip it this round.
            passive[j] = False
            w[j] = 0.0
            continue
        while passive.any() and s[passive].min() <= 0:
            it += 1
            if it > max_iter:
                raise NNLSIterationError(f"NNLS exceeded {max_iter} iterations", result())
            mask = passive & (s <= 0)
            alpha = np.min(x[mask] / (x[mask] - s[mask]))
            x = x + alpha * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
            s = np.zeros(n)
            if passive.any():
                s[passive] = _lstsq(A[:, passive], b)
        x = s
        w = A.T @ (b - A @ x)
    return result()
