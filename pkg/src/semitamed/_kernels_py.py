"""Batched stepping kernels in numpy.

Reference implementation of the functions in ``_kernels.pyx``; used when the
compiled module is unavailable or ``SEMITAMED_BACKEND=python`` is set. Every
kernel works on a batch of independent paths stacked along axis 0 and
accumulates in a fixed index order, so the value computed for one path does
not depend on which other paths share its batch.
"""

import numpy as np


def matvec(M, X):
    """``Y[b] = M @ X[b]`` for every row ``b`` of ``X``."""
    rows, cols = M.shape
    Y = np.empty((X.shape[0], rows))
    for i in range(rows):
        acc = M[i, 0] * X[:, 0]
        for j in range(1, cols):
            acc = acc + M[i, j] * X[:, j]
        Y[:, i] = acc
    return Y


def gdw(G, dW):
    """``Y[b] = G[b] @ dW[b]``."""
    acc = G[:, :, 0] * dW[:, 0:1]
    for k in range(1, G.shape[2]):
        acc = acc + G[:, :, k] * dW[:, k:k + 1]
    return acc


def row_norm(F):
    """Euclidean row norms, scaled by the largest entry against over- and underflow."""
    big = np.abs(F[:, 0])
    for j in range(1, F.shape[1]):
        big = np.fmax(big, np.abs(F[:, j]))
    safe = np.where(big == 0.0, 1.0, big)
    q = F[:, 0] / safe
    acc = q * q
    for j in range(1, F.shape[1]):
        q = F[:, j] / safe
        acc = acc + q * q
    return big * np.sqrt(acc)


def lu_solve(lu, piv, rhs):
    d = lu.shape[0]
    x = np.array(rhs, dtype=np.float64, copy=True)
    for i in range(d):
        p = piv[i]
        if p != i:
            x[:, [i, p]] = x[:, [p, i]]
    for i in range(1, d):
        acc = x[:, i]
        for j in range(i):
            acc = acc - lu[i, j] * x[:, j]
        x[:, i] = acc
    for i in range(d - 1, -1, -1):
        acc = x[:, i]
        for j in range(i + 1, d):
            acc = acc - lu[i, j] * x[:, j]
        x[:, i] = acc / lu[i, i]
    return x


def tame(F, h):
    return F * (h / (1.0 + h * row_norm(F)))[:, None]


def direct_step(A, lu, piv, X, F, G, dW, h, tamed=True):
    """One step of ``(A - hB) X' = A X + drift + G dW`` for a batch of paths.

    ``drift`` is the tamed increment ``F h / (1 + h |F|)`` or the raw ``F h``.
    """
    if tamed:
        scale = h / (1.0 + h * row_norm(F))
    else:
        scale = np.full(X.shape[0], h)
    rhs = matvec(A, X) + F * scale[:, None]
    rhs = rhs + gdw(G, dW)
    return lu_solve(lu, piv, rhs)


def dual_step(ihm_lu, ihm_piv, arb_lu, arb_piv, M2, A_pinv, RB, R, U, F, G, dW, h):
    """One dual step: solve for the differential part, then recover the
    algebraic part from the discrete constraint."""
    phi = F * (1.0 / (1.0 + h * row_norm(F)))[:, None]
    rhs = U + matvec(M2, phi) * h
    rhs = rhs + matvec(A_pinv, gdw(G, dW))
    U_next = lu_solve(ihm_lu, ihm_piv, rhs)
    v_rhs = matvec(RB, U_next) + matvec(R, phi)
    V_next = -lu_solve(arb_lu, arb_piv, v_rhs)
    return U_next, V_next
