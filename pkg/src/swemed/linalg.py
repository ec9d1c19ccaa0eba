"""Small dense matrix utilities for the structural analysis.

Eigenvalues, SVD and symmetric eigenproblems go through LAPACK (numpy); the
characteristic polynomial is an explicit Faddeev-LeVerrier recursion so the
two routes can cross-check each other.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

RANK_RTOL = 1e-9
CLUSTER_RTOL = 1e-7


class LinAlgFailure(ArithmeticError):
    pass


def _square(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def eigenvalues(m, tol: float = 1e-12, vectors: bool = False):
    """Eigenvalues of a small dense (possibly complex) matrix.

    With ``vectors=True`` also returns unit right eigenvectors as columns;
    each pair is checked against a backward error of ``10 * tol * ||m||``.
    """
    m = _square(m)
    try:
        if not vectors:
            return np.linalg.eigvals(m)
        lam, vecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"eigenvalue iteration failed: {exc}") from exc
    err = backward_errors(m, lam, vecs)
    bound = 10.0 * tol * max(matrix_norm(m), 1.0)
    if np.any(err > bound):
        raise LinAlgFailure(f"eigenpair backward error {err.max():.3e} exceeds {bound:.3e}")
    return lam, vecs


def backward_errors(m, lam, vecs) -> np.ndarray:
    """``||m v - lam v|| / ||v||`` for each eigenpair."""
    m = np.asarray(m)
    res = m @ vecs - vecs * lam[None, :]
    return np.linalg.norm(res, axis=0) / np.linalg.norm(vecs, axis=0)


def char_poly(m) -> np.ndarray:
    """Coefficients of ``det(lambda I - m)``, highest degree first."""
    m = _square(m)
    n = m.shape[0]
    dtype = np.result_type(m, float)
    coeffs = np.zeros(n + 1, dtype=dtype)
    coeffs[0] = 1.0
    eye = np.eye(n, dtype=dtype)
    mk = np.zeros((n, n), dtype=dtype)
    for k in range(1, n + 1):
        mk = m @ (mk + coeffs[k - 1] * eye)
        coeffs[k] = -np.trace(mk) / k
    return coeffs


def matrix_norm(m) -> float:
    return float(np.linalg.norm(m, 2)) if np.size(m) else 0.0


def rank(m, tol: float | None = None) -> int:
    m = _square(m)
    s = np.linalg.svd(m, compute_uv=False)
    cutoff = (RANK_RTOL if tol is None else tol) * max(s[0] if s.size else 0.0, 1e-300)
    return int(np.sum(s > cutoff))


def nullspace(m, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the kernel, one vector per column."""
    m = _square(m)
    _, s, vh = np.linalg.svd(m)
    cutoff = (RANK_RTOL if tol is None else tol) * max(s[0] if s.size else 0.0, 1e-300)
    r = int(np.sum(s > cutoff))
    return vh[r:].conj().T


def inverse(m, tol: float | None = None) -> np.ndarray:
    m = _square(m)
    if rank(m, tol) < m.shape[0]:
        raise LinAlgFailure("matrix is singular to working tolerance")
    return np.linalg.inv(m)


def symmetric_eigs(m) -> np.ndarray:
    m = _square(m)
    if not np.allclose(m, m.T.conj(), rtol=0, atol=1e-12 * max(1.0, matrix_norm(m))):
        raise ValueError("matrix is not symmetric")
    return np.linalg.eigvalsh(0.5 * (m + m.T.conj()))


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], w, step: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian with a step relative to each component.

    Components near zero are perturbed relative to the first component
    (the water depth for model states), or 1 if that is zero too.
    """
    w = np.asarray(w, dtype=float)
    scale = abs(w[0]) if w[0] != 0 else 1.0
    f0 = np.asarray(f(w))
    jac = np.empty((f0.size, w.size))
    for j in range(w.size):
        hj = step * max(abs(w[j]), scale)
        wp = w.copy()
        wm = w.copy()
        wp[j] += hj
        wm[j] -= hj
        jac[:, j] = (np.asarray(f(wp)) - np.asarray(f(wm))) / (wp[j] - wm[j])
    return jac


def cluster_eigenvalues(lam, scale: float, rtol: float = CLUSTER_RTOL) -> list[list[int]]:
    """Group eigenvalue indices whose values lie within ``rtol * (1 + scale)``.

    Single-linkage on sorted values, so a defective eigenvalue whose computed
    copies are split by rounding lands in one cluster.
    """
    lam = np.asarray(lam)
    tol = rtol * (1.0 + scale)
    remaining = list(np.argsort(lam.real + 1e-3 * lam.imag))
    clusters: list[list[int]] = []
    while remaining:
        group = [remaining.pop(0)]
        grew = True
        while grew:
            grew = False
            for idx in list(remaining):
                if min(abs(lam[idx] - lam[j]) for j in group) <= tol:
                    group.append(idx)
                    remaining.remove(idx)
                    grew = True
        clusters.append(sorted(group))
    return clusters


def match_multisets(a, b) -> float:
    """Largest pairwise distance under the optimal one-to-one matching of ``a`` and ``b``."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("multisets differ in size")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max()) if a.size else 0.0
