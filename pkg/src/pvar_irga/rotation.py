"""QR rotation that removes the own-lag block from an equation.

Rotating an equation by the full orthogonal factor of its own-lag design splits
it into a k-row problem that involves the own-country coefficients and a
(T_eff - k)-row problem that does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel_data import EquationDesign

RANK_TOL = 1e-10


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class RotationSplit:
    Q1: np.ndarray
    Q2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    X1: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray


def full_qr(X: np.ndarray):
    """Householder QR with a non-negative diagonal in R.

    Returns ``(Q1, Q2, R)`` where ``[Q1 Q2]`` is square orthogonal.
    """
    X = np.asarray(X, dtype=float)
    T, k = X.shape
    Q, R = np.linalg.qr(X, mode="complete")
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    Q[:, :k] *= d
    R[:k] *= d[:, None]
    diag = np.abs(np.diag(R))
    if k and diag.max() > 0:
        bad = np.flatnonzero(diag < RANK_TOL * diag.max())
    else:
        bad = np.arange(k)
    if bad.size:
        raise RankDeficientError(f"own-lag design is rank deficient; collinear columns: {bad.tolist()}")
    return Q[:, :k], Q[:, k:], R[:k]


def qr_rotation(design: EquationDesign) -> RotationSplit:
    Q1, Q2, _ = full_qr(design.X_own)
    Z = design.Z_other
    return RotationSplit(
        Q1=Q1,
        Q2=Q2,
        y1=Q1.T @ design.y,
        y2=Q2.T @ design.y,
        X1=Q1.T @ design.X_own,
        Z1=Q1.T @ Z,
        Z2=Q2.T @ Z,
    )
