"""Small dense linear algebra: solves, symmetric eigenvalues, spectral norms."""

import numpy as np

from .errors import NotSymmetric, SingularMatrix

PIVOT_TOL = 1e-12
SYM_TOL = 1e-10


def _as_finite(M, name="input"):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def solve_linear(M, y):
    """Solve ``M x = y`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    M : (n, n) array_like
    y : (n,) array_like

    Returns
    -------
    x : (n,) ndarray

    Raises
    ------
    SingularMatrix
        If a pivot smaller than ``1e-12`` in magnitude is met.
    """
    a = _as_finite(M, "M").copy()
    x = _as_finite(y, "y").copy()
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n or x.shape != (n,):
        raise ValueError(f"shape mismatch: M {a.shape}, y {x.shape}")
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < PIVOT_TOL:
            raise SingularMatrix(f"pivot {a[p, k]:.3e} at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        x[k + 1:] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def inverse(M):
    """Matrix inverse, one :func:`solve_linear` per column."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    return np.column_stack([solve_linear(M, e) for e in np.eye(n)])


def _check_symmetric(S):
    S = _as_finite(S, "S")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got {S.shape}")
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    if asym > SYM_TOL:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {SYM_TOL}")
    return 0.5 * (S + S.T)


def _jacobi(S, tol=1e-15, max_sweeps=100):
    a = S.copy()
    n = a.shape[0]
    scale = max(np.max(np.abs(a)), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if not np.isfinite(tau):
                    continue
                t = np.copysign(1.0, tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp, rq = a[p].copy(), a[q].copy()
                a[p], a[q] = c * rp - s * rq, s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * cp - s * cq, s * cp + c * cq
    return np.sort(np.diag(a))


def sym_eigvals(S):
    """All eigenvalues of a symmetric matrix, ascending.

    Closed form for dimension at most 2, cyclic Jacobi rotations otherwise.
    """
    S = _check_symmetric(S)
    n = S.shape[0]
    if n == 1:
        return np.array([S[0, 0]])
    if n == 2:
        m = 0.5 * (S[0, 0] + S[1, 1])
        r = np.hypot(0.5 * (S[0, 0] - S[1, 1]), S[0, 1])
        return np.array([m - r, m + r])
    return _jacobi(S)


def sym_max_eig(S):
    """Largest eigenvalue of a symmetric matrix."""
    return float(sym_eigvals(S)[-1])


def spectral_norm(M):
    """Largest singular value, ``sqrt(lambda_max(M^T M))``."""
    M = _as_finite(M, "M")
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    G = M.T @ M
    return float(np.sqrt(max(sym_max_eig(0.5 * (G + G.T)), 0.0)))
