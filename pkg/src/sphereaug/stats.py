"""Class statistics and diagnostics for features on the sphere.

Covers the running class-center estimate updated once per mini-batch, the
Gaussian approximation of a class cloud, between/within scatter matrices,
the orthogonality ratio of within-class energy against the top eigenspace of
the between-class scatter, per-class divergence (trace of the class scatter),
degeneration distance ``||A sigma - sigma||`` and eigenvalue-spectrum
comparisons between classes.

All scatter terms are outer products ``v v^T``; covariances use ``1/N``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import kernels
from .errors import (DegeneratePlane, DimensionMismatch, EmptyClass, InsufficientClasses,
                     InsufficientSamples, MissingCenter, ZeroWithinScatter)
from .geometry import rotation_plan

ANALYSIS_SCHEMA = "sphereaug.analysis/1"
HISTOGRAM_EDGES = np.round(np.arange(41) * 0.05, 2)


def _as_batch(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionMismatch(f"features {X.shape} and labels {y.shape} do not line up")
    return X, y


def symmetric_eigh(M):
    """Eigen-decomposition of the symmetrized matrix, eigenvalues descending."""
    M = np.asarray(M, dtype=np.float64)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return w[::-1], V[:, ::-1]


class ClassCenters:
    """Running per-class mean estimates.

    ``centers`` maps class id to a ``(D,)`` array and ``counts`` to the
    number of features folded in so far.
    """

    def __init__(self, dim: int, centers=None, counts=None):
        self.dim = int(dim)
        self.centers: dict[int, np.ndarray] = {}
        self.counts: dict[int, int] = {}
        for k, v in (centers or {}).items():
            v = np.array(v, dtype=np.float64)
            if v.shape != (self.dim,):
                raise DimensionMismatch(f"center {k} has shape {v.shape}, expected ({self.dim},)")
            self.centers[int(k)] = v
            self.counts[int(k)] = int((counts or {}).get(k, 0))

    def __contains__(self, label) -> bool:
        return int(label) in self.centers

    def __getitem__(self, label) -> np.ndarray:
        try:
            return self.centers[int(label)]
        except KeyError:
            raise MissingCenter(f"no center for class {label}") from None

    def __len__(self) -> int:
        return len(self.centers)

    def labels(self) -> list[int]:
        return sorted(self.centers)

    def copy(self) -> "ClassCenters":
        return ClassCenters(self.dim, self.centers, self.counts)

    def as_array(self, labels=None):
        labels = self.labels() if labels is None else labels
        return np.stack([self[k] for k in labels]) if labels else np.zeros((0, self.dim))

    @classmethod
    def from_means(cls, X, y) -> "ClassCenters":
        """Centers set to the plain per-class means of ``X``."""
        X, y = _as_batch(X, y)
        out = cls(X.shape[1])
        for k in np.unique(y):
            rows = X[y == k]
            out.centers[int(k)] = rows.mean(axis=0)
            out.counts[int(k)] = rows.shape[0]
        return out

    def to_json(self) -> dict:
        return {"dim": self.dim,
                "centers": {str(k): self.centers[k].tolist() for k in self.labels()},
                "counts": {str(k): self.counts[k] for k in self.labels()}}

    @classmethod
    def from_json(cls, doc: dict) -> "ClassCenters":
        centers = {int(k): v for k, v in doc["centers"].items()}
        counts = {int(k): v for k, v in doc.get("counts", {}).items()}
        dim = doc.get("dim") or len(next(iter(centers.values())))
        return cls(dim, centers, counts)


def update_centers(state: ClassCenters, X, y) -> ClassCenters:
    """Fold one mini-batch into the running centers.

    For class ``j`` with ``m`` batch features,
    ``delta = sum(mu_j - x_i) / (1 + m)`` and ``mu_j <- mu_j - delta``.
    A class seen for the first time starts at the mean of its batch features.
    Returns a new object; ``state`` is left untouched.
    """
    X, y = _as_batch(X, y)
    if X.shape[0] == 0:
        raise InsufficientSamples("empty batch")
    if X.shape[1] != state.dim:
        raise DimensionMismatch(f"batch dim {X.shape[1]} != center dim {state.dim}")
    out = state.copy()
    for j in np.unique(y):
        j = int(j)
        rows = X[y == j]
        m = rows.shape[0]
        if j in out.centers:
            mu = out.centers[j]
            delta = (mu * m - rows.sum(axis=0)) / (1.0 + m)
            out.centers[j] = mu - delta
            out.counts[j] += m
        else:
            out.centers[j] = rows.mean(axis=0)
            out.counts[j] = m
    return out


@dataclass(frozen=True)
class GaussianApprox:
    mean: np.ndarray
    covariance: np.ndarray


def gaussian_approximation(features) -> GaussianApprox:
    """Sample mean and biased (``1/N``) covariance.

    Raises:
        InsufficientSamples: with fewer than two samples.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[0] < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {X.shape[0]}")
    mean = X.mean(axis=0)
    R = X - mean
    cov = R.T @ R / X.shape[0]
    return GaussianApprox(mean=mean, covariance=0.5 * (cov + cov.T))


def _class_scatter(rows, center):
    R = rows - center
    S = R.T @ R / rows.shape[0]
    return 0.5 * (S + S.T)


def scatter_matrices(X, y, centers: ClassCenters):
    """Between-class scatter ``S_c`` and within-class scatter ``S_w``.

    ``S_c`` averages ``mu mu^T`` over every stored center. ``S_w`` averages,
    over the classes present in ``y``, the per-class scatter of the features
    about their stored center.
    """
    X, y = _as_batch(X, y)
    present = [int(k) for k in np.unique(y)]
    missing = [k for k in present if k not in centers]
    if missing:
        raise MissingCenter(f"no center for classes {missing}")
    if X.shape[1] != centers.dim:
        raise DimensionMismatch(f"feature dim {X.shape[1]} != center dim {centers.dim}")
    M = centers.as_array()
    s_c = M.T @ M / M.shape[0]
    s_w = np.zeros((X.shape[1], X.shape[1]))
    for k in present:
        s_w += _class_scatter(X[y == k], centers[k])
    s_w /= len(present)
    return 0.5 * (s_c + s_c.T), s_w


def class_divergence(X, y, class_id, center=None) -> float:
    """Trace of the scatter matrix of one class about ``center``.

    ``center`` defaults to the class's sample mean.
    """
    X, y = _as_batch(X, y)
    rows = X[y == int(class_id)]
    if rows.shape[0] == 0:
        raise EmptyClass(f"class {class_id} has no samples")
    c = rows.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    R = rows - c
    return float(np.einsum("ij,ij->", R, R) / rows.shape[0])


def per_class_divergence(X, y, centers: ClassCenters | None = None) -> dict[int, float]:
    X, y = _as_batch(X, y)
    return {int(k): class_divergence(X, y, k, None if centers is None else centers[k])
            for k in np.unique(y)}


def r_w_curve(s_c, s_w) -> list[float]:
    """Orthogonality ratio for every ``k = 1..D``."""
    s_w = np.asarray(s_w, dtype=np.float64)
    total = float(np.trace(s_w))
    if not total >= 1e-15:
        raise ZeroWithinScatter(f"trace(S_w) = {total:.3g}")
    _, U = symmetric_eigh(s_c)
    sym = 0.5 * (s_w + s_w.T)
    energy = np.einsum("ik,ij,jk->k", U, sym, U)
    # S_w is PSD, so negative energies are rounding noise
    ratios = np.cumsum(np.maximum(energy, 0.0)) / total
    return np.clip(ratios, 0.0, 1.0).tolist()


def orthogonality_ratio(s_c, s_w, k: int) -> float:
    """Fraction of within-class energy inside the top-``k`` eigenspace of ``S_c``.

    0 means the within-class scatter is orthogonal to the span of the class
    means; ``k = D`` gives 1.
    """
    d = np.asarray(s_c).shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    return r_w_curve(s_c, s_w)[k - 1]


def degeneration_distance(x, mu_src, mu_dst):
    """``||A sigma - sigma||`` with ``sigma = x - mu_src/||mu_src||``.

    Zero exactly when ``sigma`` sits in the subspace the rotation leaves
    fixed, i.e. when rotating and translating ``x`` agree. ``x`` may be a
    single vector or rows.
    """
    plan = rotation_plan(mu_src, mu_dst)
    sigma = np.asarray(x, dtype=np.float64) - plan.n1
    S = np.atleast_2d(sigma)
    a = S @ plan.n1
    b = S @ plan.n2
    cm1 = plan.cos_alpha - 1.0
    d = np.hypot(a * cm1 - b * plan.sin_alpha, a * plan.sin_alpha + b * cm1)
    return float(d[0]) if sigma.ndim == 1 else d


def _mean_relative_difference(rows) -> float:
    rows = np.asarray(rows, dtype=np.float64)
    total = 0.0
    count = 0
    for i, j in combinations(range(rows.shape[0]), 2):
        a, b = rows[i], rows[j]
        den = np.maximum(np.abs(a), np.abs(b))
        rel = np.divide(np.abs(a - b), den, out=np.zeros_like(den), where=den > 0)
        total += rel.sum()
        count += rel.size
    return total / count


@dataclass
class SpectrumReport:
    eigenvalues: list[list[float]]
    diagonals: list[list[float]]
    mean_rel_eigenvalue_diff: float
    mean_rel_diagonal_diff: float

    def to_json(self) -> dict:
        return {"eigenvalues": self.eigenvalues, "diagonals": self.diagonals,
                "mean_rel_eigenvalue_diff": self.mean_rel_eigenvalue_diff,
                "mean_rel_diagonal_diff": self.mean_rel_diagonal_diff}


def eigen_spectrum_report(per_class) -> SpectrumReport:
    """Compare covariance spectra and covariance diagonals across classes.

    Both averages are taken over class pairs and aligned positions of
    ``|a - b| / max(|a|, |b|)``; eigenvalues are aligned by rank.
    """
    per_class = list(per_class)
    if len(per_class) < 2:
        raise InsufficientClasses(f"need at least 2 classes, got {len(per_class)}")
    eig = np.stack([symmetric_eigh(g.covariance)[0] for g in per_class])
    diag = np.stack([np.diag(g.covariance) for g in per_class])
    return SpectrumReport(eigenvalues=eig.tolist(), diagonals=diag.tolist(),
                          mean_rel_eigenvalue_diff=float(_mean_relative_difference(eig)),
                          mean_rel_diagonal_diff=float(_mean_relative_difference(diag)))


def degeneration_distances(X, y, centers: ClassCenters):
    """Distances for every feature against every other centered class.

    Pairs with an antipodal rotation plane are skipped.
    """
    X, y = _as_batch(X, y)
    out = []
    labels = centers.labels()
    for src in np.unique(y):
        rows = X[y == src]
        for dst in labels:
            if dst == src:
                continue
            try:
                plan = rotation_plan(centers[src], centers[dst])
            except DegeneratePlane:
                continue
            sigma = rows - plan.n1
            n = sigma.shape[0]
            moved = kernels.rotate_rows(sigma, np.broadcast_to(plan.n1, sigma.shape),
                                        np.broadcast_to(plan.n2, sigma.shape),
                                        np.full(n, plan.cos_alpha), np.full(n, plan.sin_alpha))
            out.append(np.linalg.norm(moved - sigma, axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def histogram(values, edges=HISTOGRAM_EDGES) -> dict:
    values = np.asarray(values, dtype=np.float64)
    counts, _ = np.histogram(values[values <= edges[-1]], bins=edges)
    return {"edges": [float(e) for e in edges], "counts": counts.tolist(),
            "overflow": int(np.sum(values > edges[-1]))}


@dataclass
class ScatterReport:
    s_c: np.ndarray
    s_w: np.ndarray
    per_class_divergence: dict[int, float]
    r_w_curve: list[float]
    degeneration_distances: np.ndarray
    spectrum: SpectrumReport | None = None
    extra: dict = field(default_factory=dict)

    @property
    def divergence_std(self) -> float:
        return float(np.std(list(self.per_class_divergence.values())))

    def to_json(self) -> dict:
        doc = {
            "schema": ANALYSIS_SCHEMA,
            "s_c_eigenvalues": symmetric_eigh(self.s_c)[0].tolist(),
            "per_class_divergence": {str(k): v for k, v in sorted(self.per_class_divergence.items())},
            "divergence_std": self.divergence_std,
            "r_w_curve": [[k + 1, r] for k, r in enumerate(self.r_w_curve)],
            "degeneration_histogram": histogram(self.degeneration_distances),
        }
        if self.spectrum is not None:
            doc["eigen_spectrum"] = self.spectrum.to_json()
        doc.update(self.extra)
        return doc


def analyze(X, y, centers: ClassCenters | None = None) -> ScatterReport:
    """Full diagnostic report for a labelled feature snapshot.

    Centers default to the per-class means of ``X``.

    Raises:
        InsufficientClasses: fewer than two classes.
        InsufficientSamples: a class with fewer than two samples.
    """
    X, y = _as_batch(X, y)
    labels = [int(k) for k in np.unique(y)]
    if len(labels) < 2:
        raise InsufficientSamples(f"need at least 2 classes, got {len(labels)}")
    small = [k for k in labels if np.sum(y == k) < 2]
    if small:
        raise InsufficientSamples(f"classes with fewer than 2 samples: {small}")
    if centers is None:
        centers = ClassCenters.from_means(X, y)
    s_c, s_w = scatter_matrices(X, y, centers)
    spectrum = eigen_spectrum_report([gaussian_approximation(X[y == k]) for k in labels])
    return ScatterReport(
        s_c=s_c, s_w=s_w,
        per_class_divergence=per_class_divergence(X, y, centers),
        r_w_curve=r_w_curve(s_c, s_w),
        degeneration_distances=degeneration_distances(X, y, centers),
        spectrum=spectrum,
    )
