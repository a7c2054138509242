"""Differentiable symmetric positive-definite solve."""

import numpy as np

from .autodiff import _make, _pair

RIDGE = 1e-6


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


def _smallest_pivot(a):
    """Smallest diagonal pivot of an unpivoted LDL^T factorisation of ``a``."""
    a = np.array(a, dtype=np.float64)
    q = a.shape[0]
    smallest = np.inf
    for k in range(q):
        pivot = a[k, k]
        smallest = min(smallest, pivot)
        if pivot == 0:
            break
        a[k + 1 :, k + 1 :] -= np.outer(a[k + 1 :, k], a[k, k + 1 :]) / pivot
    return smallest


def solve_spd(a, b, ridge=RIDGE):
    """Solve ``(sym(A) + ridge*I) X = B`` for batches of SPD matrices.

    ``a`` is (..., Q, Q) and ``b`` is (..., Q, M). The factorisation is a
    Cholesky decomposition of the symmetric part
    ``sym(A) = (A + A^T) / 2``; gradients flow to both ``a`` and ``b``.
    """
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    if ad.shape[-1] != ad.shape[-2] or ad.shape[-1] != bd.shape[-2]:
        raise ValueError(f"solve_spd: incompatible shapes {ad.shape} and {bd.shape}")
    q = ad.shape[-1]
    # Cholesky only reads one triangle; solving with the symmetric part
    # makes the function (and its gradient) depend on every entry of A
    sym = 0.5 * (ad + np.swapaxes(ad, -1, -2))
    reg = sym + ridge * np.eye(q, dtype=ad.dtype)
    try:
        chol = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        flat = reg.reshape(-1, q, q)
        pivots = [_smallest_pivot(m) for m in flat]
        worst = int(np.argmin(pivots))
        raise NotPositiveDefiniteError(
            f"solve_spd: matrix {worst} is not positive definite after ridge {ridge:g}; "
            f"smallest pivot {pivots[worst]:.3e}"
        ) from None
    # forward and back substitution with the triangular factor
    y = np.linalg.solve(chol, bd)
    x = np.linalg.solve(np.swapaxes(chol, -1, -2), y)

    def grad_fn(g):
        gb = np.linalg.solve(np.swapaxes(chol, -1, -2), np.linalg.solve(chol, g))
        ga = None
        if a.requires_grad:
            full = np.matmul(gb, np.swapaxes(x, -1, -2))
            ga = -0.5 * (full + np.swapaxes(full, -1, -2))
        return ga, gb

    return _make(x, (a, b), grad_fn)
