"""Assemble generated feature batches.

Two schedules are supported:

``balanced``
    every feature is carried to a uniformly drawn different class;
``unbalanced``
    only features of head classes (training count at or above the tail
    threshold) are generated, each into a uniformly drawn tail class.

The transform applied to each generated feature depends only on the current
class centers, which are held fixed for the step. :class:`GenerationPlan`
keeps those constants so the same mapping can be re-applied to perturbed
inputs and differentiated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (ConfigError, DegeneratePlane, DimensionMismatch, NoEligibleTarget,
                     NonFinite, NoTailClasses)
from .geometry import ZERO_NORM_TOL, identity_plan, schmidt_pair
from .stats import ClassCenters

TRANSFORM_KINDS = ("sft", "sft_d", "translation")
MODES = ("balanced", "unbalanced")


@dataclass(frozen=True)
class SchedulerConfig:
    mode: str = "balanced"
    tail_threshold: int = 15
    lam: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.mode == "unbalanced" and self.tail_threshold < 1:
            raise ConfigError("tail_threshold must be >= 1")

    def to_json(self) -> dict:
        return {"mode": self.mode, "tail_threshold": self.tail_threshold,
                "lambda": self.lam, "rng_seed": self.rng_seed}

    @classmethod
    def from_json(cls, doc: dict) -> "SchedulerConfig":
        return cls(mode=doc.get("mode", "balanced"),
                   tail_threshold=int(doc.get("tail_threshold", 15)),
                   lam=float(doc.get("lambda", doc.get("lam", 0.2))),
                   rng_seed=int(doc.get("rng_seed", 0)))


@dataclass
class GenerationPlan:
    """Per-generated-row constants of the transform.

    For ``sft`` rows ``n1, n2, cos, sin`` describe the rotation; for
    ``sft_d`` and ``translation`` rows ``shift`` is ``mu_dst - mu_src``.
    """

    kind: str
    source_index: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    cos: np.ndarray
    sin: np.ndarray
    shift: np.ndarray

    def forward(self, X):
        src = np.asarray(X, dtype=np.float64)[self.source_index]
        if self.kind == "sft":
            return kernels.rotate_rows(src, self.n1, self.n2, self.cos, self.sin)
        moved = src + self.shift
        if self.kind == "translation":
            return moved
        return moved / np.linalg.norm(moved, axis=1)[:, None]

    def backward(self, X, G):
        """Pull the gradient w.r.t. generated rows back onto the rows of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        G = np.asarray(G, dtype=np.float64)
        if self.kind == "sft":
            g_src = kernels.rotate_rows(G, self.n1, self.n2, self.cos, -self.sin)
        elif self.kind == "translation":
            g_src = G
        else:
            moved = X[self.source_index] + self.shift
            norm = np.linalg.norm(moved, axis=1)
            out = moved / norm[:, None]
            g_src = (G - np.einsum("ij,ij->i", out, G)[:, None] * out) / norm[:, None]
        grad = np.zeros_like(X)
        np.add.at(grad, self.source_index, g_src)
        return grad


@dataclass
class AugmentedBatch:
    X: np.ndarray
    y: np.ndarray
    X_gen: np.ndarray
    y_gen: np.ndarray
    source_index: np.ndarray
    source_label: np.ndarray
    kind: str
    plan: GenerationPlan
    skipped: int = 0
    notes: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X_gen.shape[0]

    def provenance(self) -> list[dict]:
        return [{"source_index": int(i), "source_class": int(s), "target_class": int(t),
                 "transform": self.kind}
                for i, s, t in zip(self.source_index, self.source_label, self.y_gen)]


def _draw_targets(rng, n, candidates_for):
    """Uniform pick from each row's candidate list using one draw per row.

    Row ``i`` consumes the ``i``-th uniform of the stream, so the result does
    not depend on how rows are grouped or ordered when evaluated.
    """
    u = rng.random(n)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        cands = candidates_for(i)
        out[i] = cands[min(int(u[i] * len(cands)), len(cands) - 1)]
    return out


def _build(X, y, centers, kind, src_idx, targets) -> AugmentedBatch:
    if kind not in TRANSFORM_KINDS:
        raise ConfigError(f"transform kind must be one of {TRANSFORM_KINDS}, got {kind!r}")
    dim = X.shape[1]
    plans = {}
    keep = []
    n1, n2, cos, sin, shift = [], [], [], [], []
    skipped = 0
    for i, t in zip(src_idx, targets):
        s = int(y[i])
        key = (s, int(t))
        if key not in plans:
            try:
                plans[key] = schmidt_pair(centers[s], centers[t])
            except DegeneratePlane as err:
                plans[key] = None if not err.parallel else "identity"
        p = plans[key]
        d = centers[t] - centers[s]
        if kind == "sft":
            if p is None:
                skipped += 1
                continue
            if isinstance(p, str):
                p = identity_plan(dim)
            n1.append(p.n1)
            n2.append(p.n2)
            cos.append(p.cos_alpha)
            sin.append(p.sin_alpha)
        elif kind == "sft_d" and not np.linalg.norm(X[i] + d) >= ZERO_NORM_TOL:
            skipped += 1
            continue
        shift.append(d)
        keep.append((i, t))
    idx = np.array([k[0] for k in keep], dtype=np.int64)
    tgt = np.array([k[1] for k in keep], dtype=np.int64)
    m = idx.shape[0]

    def stack(rows):
        return np.array(rows, dtype=np.float64).reshape(-1, dim) if rows else np.zeros((m, dim))

    plan = GenerationPlan(kind=kind, source_index=idx,
                          n1=stack(n1), n2=stack(n2),
                          cos=np.array(cos, dtype=np.float64) if cos else np.ones(m),
                          sin=np.array(sin, dtype=np.float64) if sin else np.zeros(m),
                          shift=stack(shift))
    X_gen = plan.forward(X) if m else np.zeros((0, dim))
    return AugmentedBatch(X=X, y=y, X_gen=X_gen, y_gen=tgt, source_index=idx,
                          source_label=y[idx], kind=kind, plan=plan, skipped=skipped)


def _check(X, y, centers):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionMismatch(f"features {X.shape} and labels {y.shape} do not line up")
    if X.shape[1] != centers.dim:
        raise DimensionMismatch(f"feature dim {X.shape[1]} != center dim {centers.dim}")
    return X, y


def balanced_augment(X, y, centers: ClassCenters, kind: str, config: SchedulerConfig) -> AugmentedBatch:
    """Carry every feature to a uniformly chosen different centered class.

    Features whose own class has no center yet are not generated from.

    Raises:
        NoEligibleTarget: fewer than two classes have centers.
    """
    X, y = _check(X, y, centers)
    labels = centers.labels()
    if len(labels) < 2:
        raise NoEligibleTarget(f"need at least 2 centered classes, have {len(labels)}")
    others = {k: [c for c in labels if c != k] for k in labels}
    src = np.array([i for i in range(X.shape[0]) if int(y[i]) in centers], dtype=np.int64)
    rng = np.random.default_rng(config.rng_seed)
    targets = _draw_targets(rng, src.shape[0], lambda i: others[int(y[src[i]])])
    return _build(X, y, centers, kind, src, targets)


def tail_classes(class_counts: dict, threshold: int) -> list[int]:
    return sorted(int(k) for k, n in class_counts.items() if n < threshold)


def unbalanced_augment(X, y, centers: ClassCenters, class_counts: dict, kind: str,
                       config: SchedulerConfig) -> AugmentedBatch:
    """Carry each head-class feature to a uniformly chosen tail class.

    Head and tail are decided from ``class_counts`` (training-set sizes)
    against ``config.tail_threshold``. Tail features produce nothing.

    Raises:
        NoTailClasses: no tail class has a center.
    """
    X, y = _check(X, y, centers)
    tails = [k for k in tail_classes(class_counts, config.tail_threshold) if k in centers]
    if not tails:
        raise NoTailClasses(f"no centered class has fewer than {config.tail_threshold} samples")
    src = np.array([i for i in range(X.shape[0])
                    if class_counts.get(int(y[i]), 0) >= config.tail_threshold
                    and int(y[i]) in centers], dtype=np.int64)
    rng = np.random.default_rng(config.rng_seed)
    targets = _draw_targets(rng, src.shape[0], lambda i: tails)
    return _build(X, y, centers, kind, src, targets)


def augment(X, y, centers, kind, config: SchedulerConfig, class_counts=None) -> AugmentedBatch:
    if config.mode == "balanced":
        return balanced_augment(X, y, centers, kind, config)
    return unbalanced_augment(X, y, centers, class_counts or {}, kind, config)


def combined_loss(loss_orig: float, loss_gen: float, lam: float) -> float:
    """``loss_orig + lam * loss_gen``."""
    if not (math.isfinite(loss_orig) and math.isfinite(loss_gen) and math.isfinite(lam)):
        raise NonFinite(f"non-finite loss term: {loss_orig}, {loss_gen}, {lam}")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return loss_orig + lam * loss_gen
