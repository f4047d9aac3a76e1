"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
"""
from __future__ import annotations

import numpy as np


def rotate_rows(X, N1, N2, cos_a, sin_a):
    """Apply a per-row two-plane rotation as a rank-2 update.

    Row ``i`` of the result is ``A_i @ X[i]`` where ``A_i`` rotates by the
    angle with cosine ``cos_a[i]`` and sine ``sin_a[i]`` in the plane spanned
    by the orthonormal pair ``N1[i], N2[i]``. Pass ``-sin_a`` for the
    transpose.
    """
    X = np.asarray(X, dtype=np.float64)
    a = np.einsum("ij,ij->i", N1, X)
    b = np.einsum("ij,ij->i", N2, X)
    cm1 = cos_a - 1.0
    u = a * cm1 - b * sin_a
    v = a * sin_a + b * cm1
    return X + u[:, None] * N1 + v[:, None] * N2


def triplet_batch_all(E, labels, margin):
    """Batch-all triplet hinge on squared Euclidean distance.

    Returns ``(loss_sum, coef, n_active)`` where ``coef @ E`` is the gradient
    of ``loss_sum`` with respect to ``E``. Callers divide by ``n_active``.
    """
    E = np.asarray(E, dtype=np.float64)
    labels = np.asarray(labels)
    n = E.shape[0]
    diff = E[:, None, :] - E[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    same = labels[:, None] == labels[None, :]
    pos = same & ~np.eye(n, dtype=bool)
    neg = ~same
    hinge = d[:, :, None] - d[:, None, :] + margin
    active = pos[:, :, None] & neg[:, None, :] & (hinge > 0.0)
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0, np.zeros((n, n)), 0
    loss_sum = float(hinge[active].sum())
    m = active.astype(np.float64)
    cnt_ap = m.sum(axis=2)
    cnt_an = m.sum(axis=1)
    coef = 2.0 * (cnt_an - cnt_ap - cnt_ap.T + cnt_an.T)
    coef[np.diag_indices(n)] += 2.0 * (cnt_ap.sum(axis=0) - cnt_an.sum(axis=0))
    return loss_sum, coef, n_active
