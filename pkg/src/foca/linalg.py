"""Symmetric eigensolver: cyclic Jacobi rotations.

Desk-scale matrices here stay below a few hundred rows, where Jacobi is
simple, accurate, and produces orthonormal eigenvectors without pivoting
heuristics. One sweep visits every upper-triangle pair in order; convergence
is declared when the off-diagonal Frobenius mass falls below ``tol`` relative
to the matrix norm.
"""

from __future__ import annotations

import numpy as np


def jacobi_eigh(matrix, tol: float = 1e-13, max_sweeps: int = 60):
    """Eigenvalues (ascending) and orthonormal eigenvector columns of a symmetric matrix.

    Raises ``ValueError`` for non-square or non-symmetric input and
    ``ArithmeticError`` if the sweep budget is exhausted before convergence.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    scale = np.abs(a).max(initial=0.0)
    if not np.allclose(a, a.T, atol=1e-10 * max(scale, 1.0)):
        raise ValueError("matrix is not symmetric")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v

    norm = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * norm:
            vals = np.diag(a).copy()
            order = np.argsort(vals, kind="stable")
            return vals[order], v[:, order]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # rotation angle from tan(2*angle); the smaller root keeps
                # the rotation below 45 degrees for stability
                phi = (a[q, q] - a[p, p]) / (2.0 * apq)
                if phi == 0.0:
                    t = 1.0
                else:
                    t = np.sign(phi) / (abs(phi) + np.hypot(phi, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    raise ArithmeticError(f"Jacobi sweep budget ({max_sweeps}) exhausted before convergence")
