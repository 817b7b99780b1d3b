"""Householder QR for least-squares problems."""

import math

import numpy as np

from .errors import SingularDesignError

RANK_TOL = 1e-10


def householder_qr(A):
    """Thin QR of an n x p matrix (n >= p) by Householder reflections.

    Returns ``(Q1, R)`` with ``Q1`` n x p having orthonormal columns and ``R``
    p x p upper triangular, so that ``A = Q1 @ R``.
    """
    R = np.array(A, dtype=np.float64, copy=True)
    n, p = R.shape
    reflectors = []
    for j in range(min(n, p)):
        x = R[j:, j]
        normx = math.sqrt(x @ x)
        if normx == 0.0:
            reflectors.append(None)
            continue
        v = x.copy()
        v[0] += np.copysign(normx, x[0])
        v /= math.sqrt(v @ v)
        R[j:, j:] -= 2.0 * np.multiply.outer(v, v @ R[j:, j:])
        R[j + 1:, j] = 0.0
        reflectors.append(v)
    Q1 = np.eye(n, p)
    for j in range(len(reflectors) - 1, -1, -1):
        v = reflectors[j]
        if v is not None:
            Q1[j:, :] -= 2.0 * np.multiply.outer(v, v @ Q1[j:, :])
    return Q1, np.triu(R[:p, :p])


def check_rank(R, names=None, tol=RANK_TOL):
    """Raise :class:`SingularDesignError` at the first negligible pivot of ``R``."""
    scale = np.max(np.abs(R)) if R.size else 0.0
    diag = np.abs(np.diag(R))
    for k, d in enumerate(diag):
        if not d > tol * scale:
            name = names[k] if names is not None else f"column {k}"
            raise SingularDesignError(f"design is rank deficient: {name!r} is aliased with earlier terms", term=name)


def back_substitute(R, b):
    """Solve ``R x = b`` for upper-triangular ``R`` (b may be a matrix)."""
    b = np.array(b, dtype=np.float64, copy=True)
    p = R.shape[0]
    x = np.zeros_like(b)
    for i in range(p - 1, -1, -1):
        x[i] = (b[i] - R[i, i + 1:] @ x[i + 1:]) / R[i, i]
    return x


def r_inverse_gram(R):
    """``(R^T R)^{-1}`` computed as ``R^{-1} R^{-T}``."""
    Rinv = back_substitute(R, np.eye(R.shape[0]))
    return Rinv @ Rinv.T
