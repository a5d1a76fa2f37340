"""Small dense linear algebra for the symmetric systems used by the estimators.

Matrices here are at most a few dozen rows for the (L+1)-sized Gram and
Fisher matrices, and up to ~K rows for the LMMSE system. Everything works on
plain ``numpy`` arrays; only the factorizations are hand-written.
"""

import numpy as np

SYM_RTOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not strictly positive."""


def _as_matrix(a, name="a"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _symmetrized(a):
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {a.shape}")
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def mat_mul(a, b):
    """Matrix product with a dimension check."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def cholesky(a):
    """Lower-triangular factor ``l`` with ``l @ l.T == a``.

    Pivots are compared against ``n * eps * max(diag(a))`` so that numerically
    rank-deficient Gram matrices are reported as singular.
    """
    a = _symmetrized(a)
    n = a.shape[0]
    l = np.zeros_like(a)
    floor = n * np.finfo(float).eps * max(np.max(np.abs(np.diag(a)), initial=0.0), 1e-300)
    for j in range(n):
        row = l[j, :j]
        pivot = a[j, j] - row @ row
        if not pivot > floor:
            raise SingularMatrixError(f"non-positive pivot {pivot:.3e} at column {j}")
        d = np.sqrt(pivot)
        l[j, j] = d
        if j + 1 < n:
            l[j + 1:, j] = (a[j + 1:, j] - l[j + 1:, :j] @ row) / d
    return l


def _forward(l, b):
    x = np.empty_like(b)
    for i in range(l.shape[0]):
        x[i] = (b[i] - l[i, :i] @ x[:i]) / l[i, i]
    return x


def _backward(l, y):
    # solves l.T x = y
    n = l.shape[0]
    x = np.empty_like(y)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - l[i + 1:, i] @ x[i + 1:]) / l[i, i]
    return x


def solve_spd(a, b):
    """Solve ``a x = b`` for symmetric positive-definite ``a``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    l = cholesky(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != l.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {l.shape[0]}")
    return _backward(l, _forward(l, b))


def invert_sym(a):
    a = _symmetrized(a)
    inv = solve_spd(a, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def sym_eigenvalues(a, tol=1e-14, max_sweeps=100):
    """Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi)."""
    a = _symmetrized(a).copy()
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    norm = np.sqrt(np.sum(a * a))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum((a - np.diag(np.diag(a))) ** 2))
        if off <= tol * norm or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q])) or apq == 0.0:
                    a[p, q] = a[q, p] = 0.0  # negligible against the diagonal
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
    return np.sort(np.diag(a))
