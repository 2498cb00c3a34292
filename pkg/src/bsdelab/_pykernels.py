"""Pure numpy implementations of the path-loop kernels.

Every routine here has a twin in ``_ckernels.pyx``.  The two are required to
agree bit for bit, so the association order of every floating point
reduction is fixed:

* reductions over paths use a pairwise tree in which adjacent rows are added
  and an unpaired last row is carried to the next level;
* running sums along time are strictly sequential.
"""

import numpy as np


def pairwise_colsum(a):
    """Column sums of a 2-D array, reduced over rows by a pairwise tree."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("pairwise_colsum expects a 2-D array")
    n = a.shape[0]
    if n == 0:
        return np.zeros(a.shape[1])
    while n > 1:
        if n % 2:
            a = np.concatenate([a[0:n - 1:2] + a[1:n - 1:2], a[n - 1:n]])
        else:
            a = a[0::2] + a[1::2]
        n = a.shape[0]
    return a[0].copy()


def normal_equations(X, Y):
    """Return ``(X^T X, X^T Y)`` with pairwise summation over rows.

    ``X`` has shape (N, p) and ``Y`` shape (N, r).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    N, p = X.shape
    r = Y.shape[1]
    prods = np.empty((N, p * p + p * r))
    prods[:, :p * p] = (X[:, :, None] * X[:, None, :]).reshape(N, p * p)
    prods[:, p * p:] = (X[:, :, None] * Y[:, None, :]).reshape(N, p * r)
    s = pairwise_colsum(prods)
    return s[:p * p].reshape(p, p), s[p * p:].reshape(p, r)


def forward_cumsum(incr):
    """Running sums along axis 1 starting from zero: (N, J, ...) -> (N, J+1, ...)."""
    incr = np.asarray(incr, dtype=np.float64)
    out = np.zeros((incr.shape[0], incr.shape[1] + 1) + incr.shape[2:])
    np.cumsum(incr, axis=1, out=out[:, 1:])
    return out


def backward_cumsum(incr):
    """Tail sums along axis 1: ``out[:, j] = sum_{k >= j} incr[:, k]``, ``out[:, J] = 0``."""
    incr = np.asarray(incr, dtype=np.float64)
    out = np.zeros((incr.shape[0], incr.shape[1] + 1) + incr.shape[2:])
    out[:, :-1] = np.cumsum(incr[:, ::-1], axis=1)[:, ::-1]
    return out


def affine_forward(eta, u, v, dt, dw, j0):
    """Euler recursion ``z[j+1] = z[j] + (u[j]*dt[j] + v[j]*dw[j])`` from knot ``j0``.

    ``eta`` is (N, n); ``u`` and ``v`` are (N, J, n); ``dw`` is (N, J).
    Knots before ``j0`` are left at zero.
    """
    eta = np.asarray(eta, dtype=np.float64)
    N, J, n = u.shape
    z = np.zeros((N, J + 1, n))
    incr = u[:, j0:] * dt[None, j0:, None] + v[:, j0:] * dw[:, j0:, None]
    z[:, j0] = eta
    if J > j0:
        # the cumulative sum must start from eta itself to keep the
        # association order identical to the compiled loop
        stacked = np.concatenate([eta[:, None, :], incr], axis=1)
        z[:, j0:] = np.cumsum(stacked, axis=1)
    return z
