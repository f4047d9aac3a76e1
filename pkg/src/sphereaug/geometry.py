"""Unit-sphere vector operations and the three feature transforms.

A feature ``x`` of one class is carried to another class in one of three ways:

* ``sft_transform``: rotate ``x`` by the rotation that takes the source mean
  direction onto the target mean direction, acting only on the plane the two
  means span.
* ``translation_transform``: ``x + mu_dst - mu_src``. Leaves the sphere.
* ``degenerated_sft``: the translation followed by re-projection onto the
  sphere.

Rotations are applied as rank-2 updates; ``rodrigues_rotation`` builds the
explicit matrix for checking and for small problems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegeneratePlane, DimensionMismatch, ZeroNorm

ZERO_NORM_TOL = 1e-15
PLANE_TOL = 1e-9


def normalize(v):
    """Scale ``v`` to unit Euclidean norm.

    Raises:
        ZeroNorm: if ``||v|| < 1e-15``.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not norm >= ZERO_NORM_TOL:
        raise ZeroNorm(f"cannot normalize vector with norm {norm:.3g}")
    return v / norm


def normalize_rows(X):
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    if X.shape[0] and not np.all(norms >= ZERO_NORM_TOL):
        raise ZeroNorm(f"{int(np.sum(~(norms >= ZERO_NORM_TOL)))} rows have zero norm")
    return X / norms[:, None]


@dataclass(frozen=True)
class RotationPlan:
    """Orthonormal pair spanning the rotation plane plus the angle.

    ``cos_alpha`` and ``sin_alpha`` are kept alongside ``alpha`` so the
    rotation can be applied without recomputing them through ``arccos``.
    """

    n1: np.ndarray
    n2: np.ndarray
    alpha: float
    cos_alpha: float
    sin_alpha: float

    @property
    def dim(self) -> int:
        return self.n1.shape[0]

    def apply(self, x, transpose: bool = False):
        """Rotate a single vector or the rows of a 2-D array."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        n = X.shape[0]
        s = -self.sin_alpha if transpose else self.sin_alpha
        out = kernels.rotate_rows(
            X, np.broadcast_to(self.n1, X.shape), np.broadcast_to(self.n2, X.shape),
            np.full(n, self.cos_alpha), np.full(n, s))
        return out[0] if single else out


def _check_pair(mu1, mu2):
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    if mu1.shape != mu2.shape or mu1.ndim != 1:
        raise DimensionMismatch(f"mean shapes {mu1.shape} and {mu2.shape} differ")
    return mu1, mu2


def schmidt_pair(mu1, mu2) -> RotationPlan:
    """Orthonormalize two mean vectors into a rotation plane.

    ``n1`` is the source direction; ``n2`` is the component of the target
    direction orthogonal to it, normalized. The angle is taken from
    ``atan2(||m2 - c n1||, c)`` with ``c = n1 . m2``, which agrees with
    ``arccos(clip(c, -1, 1))`` and stays accurate near 0 and pi.

    Raises:
        DegeneratePlane: if the directions are parallel or antipodal to
            within ``1e-9`` in cosine. ``err.parallel`` tells which.
    """
    mu1, mu2 = _check_pair(mu1, mu2)
    n1 = normalize(mu1)
    m2 = normalize(mu2)
    c = float(np.dot(n1, m2))
    if abs(c) > 1.0 - PLANE_TOL:
        raise DegeneratePlane(
            "means are parallel" if c > 0 else "means are antipodal", parallel=c > 0)
    r = m2 - c * n1
    s = float(np.linalg.norm(r))
    n2 = r / s
    # one re-orthogonalization pass keeps n1 . n2 at rounding level
    n2 = n2 - np.dot(n2, n1) * n1
    n2 /= np.linalg.norm(n2)
    alpha = float(np.arctan2(s, c))
    return RotationPlan(n1=n1, n2=n2, alpha=alpha, cos_alpha=float(np.cos(alpha)),
                        sin_alpha=float(np.sin(alpha)))


def identity_plan(dim: int) -> RotationPlan:
    e1 = np.zeros(dim)
    e2 = np.zeros(dim)
    e1[0] = 1.0
    e2[1 % dim] = 1.0
    return RotationPlan(n1=e1, n2=e2, alpha=0.0, cos_alpha=1.0, sin_alpha=0.0)


def rotation_plan(mu_src, mu_dst) -> RotationPlan:
    """Like :func:`schmidt_pair` but returns the identity for parallel means."""
    try:
        return schmidt_pair(mu_src, mu_dst)
    except DegeneratePlane as err:
        if err.parallel:
            return identity_plan(np.asarray(mu_src).shape[0])
        raise


def rodrigues_rotation(plan: RotationPlan, dim: int | None = None):
    """Explicit ``D x D`` matrix of the two-plane rotation.

    ``A = I + (n2 n1^T - n1 n2^T) sin(a) + (n1 n1^T + n2 n2^T)(cos(a) - 1)``
    """
    d = plan.dim if dim is None else dim
    if d != plan.dim:
        raise DimensionMismatch(f"plan has dimension {plan.dim}, requested {d}")
    n1, n2 = plan.n1, plan.n2
    skew = np.outer(n2, n1) - np.outer(n1, n2)
    proj = np.outer(n1, n1) + np.outer(n2, n2)
    return np.eye(d) + skew * plan.sin_alpha + proj * (plan.cos_alpha - 1.0)


def sft_transform(x, mu_src, mu_dst):
    """Rotate ``x`` (a vector or rows) from the source class to the target class.

    Parallel means give ``x`` back unchanged; antipodal means raise
    :class:`DegeneratePlane`.
    """
    plan = rotation_plan(mu_src, mu_dst)
    return plan.apply(x)


def translation_transform(x, mu_src, mu_dst):
    x = np.asarray(x, dtype=np.float64)
    mu_src, mu_dst = _check_pair(mu_src, mu_dst)
    if x.shape[-1] != mu_src.shape[0]:
        raise DimensionMismatch(f"feature dim {x.shape[-1]} != mean dim {mu_src.shape[0]}")
    return x + (mu_dst - mu_src)


def degenerated_sft(x, mu_src, mu_dst):
    """Translate by the mean difference, then project back onto the sphere."""
    y = translation_transform(x, mu_src, mu_dst)
    if y.ndim == 1:
        return normalize(y)
    return normalize_rows(y)


TRANSFORMS = {
    "sft": sft_transform,
    "sft_d": degenerated_sft,
    "translation": translation_transform,
}
