"""Synthetic spherical class clouds with a shared covariance shape.

A template cloud is drawn around ``e1``: Gaussian offsets in the tangent
coordinates ``e2..eD`` with the configured variances, projected onto the
sphere by normalization. Class ``k`` is the template rotated (in the plane of
``e1`` and its mean) onto a random mean direction, so with ``noise_mix = 0``
all classes share one covariance spectrum. ``noise_mix > 0`` rescales each
class's tangent variances by independent factors ``1 + noise_mix * u`` with
``u ~ U[-1, 1]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ConfigError, InfeasibleSeparation
from .geometry import identity_plan, rodrigues_rotation, schmidt_pair

_CANDIDATES = 512
_ATTEMPTS = 64


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int
    n_classes: int
    template_eigenvalues: tuple[float, ...]
    samples_per_class: tuple[int, ...]
    noise_mix: float = 0.0
    rng_seed: int = 0
    min_separation_deg: float = 30.0
    test_per_class: int = 0

    def __post_init__(self):
        object.__setattr__(self, "template_eigenvalues", tuple(float(v) for v in self.template_eigenvalues))
        object.__setattr__(self, "samples_per_class", tuple(int(v) for v in self.samples_per_class))
        if self.dim < 3 or self.n_classes < 2:
            raise ConfigError("need dim >= 3 and n_classes >= 2")
        if len(self.template_eigenvalues) != self.dim - 1:
            raise ConfigError(f"expected {self.dim - 1} template eigenvalues, got {len(self.template_eigenvalues)}")
        if any(v < 0 for v in self.template_eigenvalues):
            raise ConfigError("template eigenvalues must be >= 0")
        if len(self.samples_per_class) != self.n_classes or any(n < 1 for n in self.samples_per_class):
            raise ConfigError("samples_per_class needs one count >= 1 per class")
        if not 0.0 <= self.noise_mix <= 1.0:
            raise ConfigError("noise_mix must lie in [0, 1]")
        if self.test_per_class < 0:
            raise ConfigError("test_per_class must be >= 0")

    @classmethod
    def uniform(cls, dim, n_classes, template_eigenvalues, count, **kw) -> "SyntheticSpec":
        return cls(dim, n_classes, tuple(template_eigenvalues), (count,) * n_classes, **kw)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["template_eigenvalues"] = list(self.template_eigenvalues)
        doc["samples_per_class"] = list(self.samples_per_class)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SyntheticSpec":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic options: {sorted(unknown)}")
        if "samples_per_class" in doc and isinstance(doc["samples_per_class"], int):
            doc["samples_per_class"] = [doc["samples_per_class"]] * int(doc["n_classes"])
        try:
            return cls(**doc)
        except TypeError as err:
            raise ConfigError(str(err)) from None


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    rotations: list[np.ndarray]
    spec: SyntheticSpec
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    eigenvalue_scales: np.ndarray = field(default=None, repr=False)

    @property
    def class_counts(self) -> dict[int, int]:
        labels, counts = np.unique(self.labels, return_counts=True)
        return dict(zip(labels.tolist(), counts.tolist()))

    def ground_truth_json(self) -> dict:
        return {"spec": self.spec.to_json(), "centers": self.centers.tolist(),
                "rotations": [r.tolist() for r in self.rotations],
                "eigenvalue_scales": self.eigenvalue_scales.tolist(),
                "class_counts": {str(k): v for k, v in self.class_counts.items()}}


def _mean_directions(spec: SyntheticSpec) -> np.ndarray:
    d, c = spec.dim, spec.n_classes
    cos_max = np.cos(np.deg2rad(spec.min_separation_deg))
    rng = np.random.default_rng([spec.rng_seed, 0])
    means = [np.eye(d)[0]]
    for _ in range(1, c):
        for _ in range(_ATTEMPTS):
            cand = rng.standard_normal((_CANDIDATES, d))
            cand /= np.linalg.norm(cand, axis=1)[:, None]
            ok = np.all(cand @ np.array(means).T <= cos_max, axis=1)
            if ok.any():
                means.append(cand[np.argmax(ok)])
                break
        else:
            raise InfeasibleSeparation(
                f"could not place {c} mean directions {spec.min_separation_deg} degrees apart in {d} dims "
                f"(placed {len(means)})")
    return np.array(means)


def _template_cloud(rng, eigenvalues, n):
    d = eigenvalues.shape[0] + 1
    pts = np.zeros((n, d))
    pts[:, 0] = 1.0
    pts[:, 1:] = rng.standard_normal((n, d - 1)) * np.sqrt(eigenvalues)
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def _rotate(plan, pts):
    n = pts.shape[0]
    return kernels.rotate_rows(pts, np.broadcast_to(plan.n1, pts.shape), np.broadcast_to(plan.n2, pts.shape),
                               np.full(n, plan.cos_alpha), np.full(n, plan.sin_alpha))


def generate(spec: SyntheticSpec) -> LabeledDataset:
    """Draw a labelled dataset (and optional balanced test split) from ``spec``.

    Every class has its own random streams, so class ``k``'s samples do not
    depend on the counts of other classes or on the test split size.

    Raises:
        InfeasibleSeparation: the mean directions cannot be placed with the
            requested pairwise separation.
    """
    means = _mean_directions(spec)
    e1 = np.eye(spec.dim)[0]
    base = np.asarray(spec.template_eigenvalues, dtype=np.float64)
    feats, labels, tfeats, tlabels, rotations, scales = [], [], [], [], [], []
    for k in range(spec.n_classes):
        plan = identity_plan(spec.dim) if k == 0 else schmidt_pair(e1, means[k])
        rotations.append(rodrigues_rotation(plan))
        if spec.noise_mix > 0:
            u = np.random.default_rng([spec.rng_seed, 3, k]).uniform(-1.0, 1.0, base.shape[0])
            s = 1.0 + spec.noise_mix * u
        else:
            s = np.ones_like(base)
        scales.append(s)
        eig = base * s
        train = _template_cloud(np.random.default_rng([spec.rng_seed, 1, k]), eig, spec.samples_per_class[k])
        feats.append(_rotate(plan, train))
        labels.append(np.full(train.shape[0], k, dtype=np.int64))
        if spec.test_per_class:
            test = _template_cloud(np.random.default_rng([spec.rng_seed, 2, k]), eig, spec.test_per_class)
            tfeats.append(_rotate(plan, test))
            tlabels.append(np.full(test.shape[0], k, dtype=np.int64))
    return LabeledDataset(
        features=np.concatenate(feats), labels=np.concatenate(labels), centers=means,
        rotations=rotations, spec=spec,
        test_features=np.concatenate(tfeats) if tfeats else None,
        test_labels=np.concatenate(tlabels) if tlabels else None,
        eigenvalue_scales=np.array(scales))


def make_longtail(spec: SyntheticSpec, head_count: int, tail_count: int, head_classes: int,
                  tail_classes: int) -> SyntheticSpec:
    """Copy of ``spec`` with ``head_classes`` classes of ``head_count``
    samples followed by ``tail_classes`` classes of ``tail_count``."""
    if min(head_count, tail_count) < 1 or head_classes < 0 or tail_classes < 0:
        raise ConfigError("counts must be >= 1 and class numbers >= 0")
    counts = (head_count,) * head_classes + (tail_count,) * tail_classes
    return replace(spec, n_classes=head_classes + tail_classes, samples_per_class=counts)
