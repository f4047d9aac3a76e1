"""Small metric-learning harness: linear embedding, triplet loss, SGD.

One training iteration:

1. draw a P-classes x K-samples batch and embed it (linear map, then L2
   normalization);
2. generate features for other classes with the current centers;
3. fold the original embeddings into the running centers;
4. take an SGD step on ``J(X, Y) + lam * J(X_gen, Y_gen)``.

Gradients are written out by hand. Transforms are treated as constants of
the centers, so the generated loss reaches the weights only through the
source embeddings.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyTestSet, NoEligibleTarget, NoPositivePairs, NoTailClasses, \
    NoValidTriplets, ZeroNorm
from .geometry import ZERO_NORM_TOL
from .scheduler import TRANSFORM_KINDS, GenerationPlan, SchedulerConfig, augment, combined_loss
from .stats import ClassCenters, per_class_divergence, update_centers

EVALUATION_SCHEMA = "sphereaug.evaluation/1"
METRICS_COLUMNS = ("iter", "loss_orig", "loss_gen", "combined", "active_triplets")


@dataclass
class EmbeddingModel:
    weight: np.ndarray
    bias: np.ndarray | None = None

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def pre_activation(self, U):
        Z = np.asarray(U, dtype=np.float64) @ self.weight.T
        if self.bias is not None:
            Z = Z + self.bias
        return Z

    def forward(self, U):
        """Unit-norm embeddings of the rows of ``U``."""
        return _normalize_forward(self.pre_activation(U))[0]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.weight.copy(), None if self.bias is None else self.bias.copy())

    def to_json(self) -> dict:
        return {"weight": self.weight.tolist(),
                "bias": None if self.bias is None else self.bias.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "EmbeddingModel":
        bias = doc.get("bias")
        return cls(np.array(doc["weight"], dtype=np.float64),
                   None if bias is None else np.array(bias, dtype=np.float64))


def forward(model: EmbeddingModel, inputs):
    return model.forward(inputs)


def _normalize_forward(Z):
    norms = np.linalg.norm(Z, axis=1)
    if Z.shape[0] and not np.all(norms >= ZERO_NORM_TOL):
        raise ZeroNorm("an embedding vanished before normalization")
    return Z / norms[:, None], norms


def normalize_backward(X, norms, G):
    """Gradient through ``z -> z/||z||``; the result is tangent to ``X``."""
    return (G - np.einsum("ij,ij->i", X, G)[:, None] * X) / norms[:, None]


@dataclass(frozen=True)
class TripletLossSpec:
    margin: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.margin) and self.margin > 0):
            raise ConfigError(f"margin must be finite and > 0, got {self.margin}")


def has_valid_triplet(labels) -> bool:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return counts.size >= 2 and bool(np.any(counts >= 2))


def triplet_loss(E, labels, spec: TripletLossSpec = TripletLossSpec()):
    """Batch-all triplet loss on squared Euclidean distance.

    Averages ``max(0, d(a,p) - d(a,n) + margin)`` over the triplets where the
    hinge is positive.

    Returns:
        ``(loss, grad, n_active)`` with ``grad`` shaped like ``E``.

    Raises:
        NoValidTriplets: no anchor has both a positive and a negative.
    """
    E = np.asarray(E, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not has_valid_triplet(labels):
        raise NoValidTriplets("need one class with 2+ samples and another class")
    loss_sum, coef, n_active = kernels.triplet_batch_all(E, labels, spec.margin)
    if n_active == 0:
        return 0.0, np.zeros_like(E), 0
    return loss_sum / n_active, (coef @ E) / n_active, n_active


@dataclass
class StepResult:
    loss_orig: float
    loss_gen: float
    combined: float
    active_orig: int
    active_gen: int
    n_generated: int
    grad_weight: np.ndarray
    grad_bias: np.ndarray | None


def loss_and_grad(model: EmbeddingModel, U, y, lam: float, spec: TripletLossSpec,
                  plan: GenerationPlan | None = None, y_gen=None) -> StepResult:
    """Combined objective and its gradient w.r.t. the model parameters.

    ``plan`` fixes which embeddings are transformed, into which classes and
    with which constant transform; ``None`` means no generated term.
    """
    U = np.asarray(U, dtype=np.float64)
    Z = model.pre_activation(U)
    X, norms = _normalize_forward(Z)
    loss_o, g_x, act_o = triplet_loss(X, y, spec)
    loss_g, act_g, n_gen = 0.0, 0, 0
    if plan is not None and plan.source_index.size:
        n_gen = plan.source_index.size
        X_gen = plan.forward(X)
        if has_valid_triplet(y_gen):
            loss_g, g_gen, act_g = triplet_loss(X_gen, y_gen, spec)
            # lam == 0 must leave the step bitwise identical to the baseline
            if lam != 0 and act_g:
                g_x = g_x + lam * plan.backward(X, g_gen)
    g_z = normalize_backward(X, norms, g_x)
    return StepResult(loss_orig=loss_o, loss_gen=loss_g, combined=combined_loss(loss_o, loss_g, lam),
                      active_orig=act_o, active_gen=act_g, n_generated=n_gen,
                      grad_weight=g_z.T @ U,
                      grad_bias=None if model.bias is None else g_z.sum(axis=0))


@dataclass
class TrainConfig:
    kind: str = "sft"
    mode: str = "balanced"
    lam: float = 0.2
    tail_threshold: int = 15
    lr: float = 0.05
    momentum: float = 0.0
    weight_decay: float = 0.0
    margin: float = 0.1
    classes_per_batch: int = 20
    samples_per_class: int = 3
    iterations: int = 300
    d_out: int = 16
    bias: bool = False
    init: str = "random"
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none",) + TRANSFORM_KINDS:
            raise ConfigError(f"kind must be none or one of {TRANSFORM_KINDS}, got {self.kind!r}")
        if self.init not in ("random", "identity"):
            raise ConfigError(f"init must be 'random' or 'identity', got {self.init!r}")
        if self.lr <= 0 or self.iterations < 0 or self.classes_per_batch < 2 or self.samples_per_class < 2:
            raise ConfigError("lr > 0, iterations >= 0, classes_per_batch >= 2, samples_per_class >= 2 required")
        SchedulerConfig(mode=self.mode, tail_threshold=self.tail_threshold, lam=self.lam)
        TripletLossSpec(self.margin)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class TrainState:
    model: EmbeddingModel
    centers: ClassCenters
    config: TrainConfig
    class_counts: dict[int, int]
    iteration: int = 0
    velocity_w: np.ndarray | None = None
    velocity_b: np.ndarray | None = None
    rng: np.random.Generator = field(default=None, repr=False)


def init_state(config: TrainConfig, d_in: int, class_counts: dict[int, int]) -> TrainState:
    rng = np.random.default_rng([config.seed, 0])
    if config.init == "identity":
        W = np.eye(config.d_out, d_in)
    else:
        W = rng.standard_normal((config.d_out, d_in)) / math.sqrt(d_in)
    W = W * config.init_scale
    b = np.zeros(config.d_out) if config.bias else None
    return TrainState(model=EmbeddingModel(W, b), centers=ClassCenters(config.d_out),
                      config=config, class_counts=dict(class_counts),
                      rng=np.random.default_rng([config.seed, 1]))


def sample_batch(rng: np.random.Generator, y, classes_per_batch: int, samples_per_class: int):
    """Indices of a P x K batch; K is drawn with replacement for small classes."""
    y = np.asarray(y)
    labels = np.unique(y)
    p = min(classes_per_batch, labels.size)
    chosen = np.sort(rng.choice(labels, size=p, replace=False))
    out = []
    for k in chosen:
        idx = np.flatnonzero(y == k)
        out.append(rng.choice(idx, size=samples_per_class, replace=idx.size < samples_per_class))
    return np.concatenate(out)


def scheduler_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, 2, iteration]).generate_state(1, np.uint64)[0])


def train_step(state: TrainState, U_batch, y_batch) -> dict:
    """Run one iteration in place and return its metrics."""
    cfg = state.config
    model = state.model
    U_batch = np.asarray(U_batch, dtype=np.float64)
    y_batch = np.asarray(y_batch, dtype=np.int64)
    spec = TripletLossSpec(cfg.margin)

    X = model.forward(U_batch)
    plan, y_gen = None, None
    if cfg.kind != "none":
        sched = SchedulerConfig(mode=cfg.mode, tail_threshold=cfg.tail_threshold, lam=cfg.lam,
                                rng_seed=scheduler_seed(cfg.seed, state.iteration))
        try:
            batch = augment(X, y_batch, state.centers, cfg.kind, sched, state.class_counts)
        except (NoEligibleTarget, NoTailClasses):
            batch = None
        if batch is not None:
            plan, y_gen = batch.plan, batch.y_gen
    state.centers = update_centers(state.centers, X, y_batch)

    res = loss_and_grad(model, U_batch, y_batch, cfg.lam, spec, plan, y_gen)
    g_w = res.grad_weight
    g_b = res.grad_bias
    if cfg.weight_decay:
        g_w = g_w + cfg.weight_decay * model.weight
    if cfg.momentum:
        state.velocity_w = g_w if state.velocity_w is None else cfg.momentum * state.velocity_w + g_w
        g_w = state.velocity_w
        if g_b is not None:
            state.velocity_b = g_b if state.velocity_b is None else cfg.momentum * state.velocity_b + g_b
            g_b = state.velocity_b
    model.weight = model.weight - cfg.lr * g_w
    if g_b is not None:
        model.bias = model.bias - cfg.lr * g_b
    state.iteration += 1
    return {"iter": state.iteration, "loss_orig": res.loss_orig, "loss_gen": res.loss_gen,
            "combined": res.combined, "active_triplets": res.active_orig,
            "active_gen": res.active_gen, "n_generated": res.n_generated}


def train(config: TrainConfig, U, y, callback=None):
    """Run ``config.iterations`` steps from a fresh state.

    Returns the final state and the list of per-iteration metrics.
    """
    U = np.asarray(U, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    labels, counts = np.unique(y, return_counts=True)
    state = init_state(config, U.shape[1], dict(zip(labels.tolist(), counts.tolist())))
    history = []
    for _ in range(config.iterations):
        idx = sample_batch(state.rng, y, config.classes_per_batch, config.samples_per_class)
        m = train_step(state, U[idx], y[idx])
        history.append(m)
        if callback is not None:
            callback(m)
    return state, history


def recall_at_1(E, y) -> float:
    """Fraction of rows whose nearest other row (by cosine) shares the label."""
    E = np.asarray(E, dtype=np.float64)
    y = np.asarray(y)
    if E.shape[0] == 0:
        raise EmptyTestSet("no test samples")
    _, counts = np.unique(y, return_counts=True)
    if not np.any(counts >= 2):
        raise NoPositivePairs("no class has two samples, recall@1 is undefined")
    sim = E @ E.T
    np.fill_diagonal(sim, -np.inf)
    return float(np.mean(y[np.argmax(sim, axis=1)] == y))


def evaluate(model: EmbeddingModel, U_test, y_test, centers=None, class_counts=None,
             tail_threshold: int = 15) -> dict:
    """Retrieval and nearest-center classification metrics.

    ``centers`` (a :class:`ClassCenters` in embedding space) defaults to the
    per-class means of the test embeddings. Head/tail accuracies are reported
    when ``class_counts`` is given.
    """
    U_test = np.asarray(U_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.int64)
    if U_test.shape[0] == 0 or np.unique(y_test).size < 2:
        raise EmptyTestSet("need test samples from at least 2 classes")
    E = model.forward(U_test)
    if centers is None:
        centers = ClassCenters.from_means(E, y_test)
    labels = centers.labels()
    C = centers.as_array(labels)
    C = C / np.linalg.norm(C, axis=1)[:, None]
    pred = np.asarray(labels)[np.argmax(E @ C.T, axis=1)]
    hit = pred == y_test
    per_class = {int(k): float(np.mean(hit[y_test == k])) for k in np.unique(y_test)}
    div = per_class_divergence(E, y_test)
    out = {
        "schema": EVALUATION_SCHEMA,
        "recall_at_1": recall_at_1(E, y_test),
        "accuracy": float(np.mean(hit)),
        "per_class_accuracy": {str(k): v for k, v in per_class.items()},
        "per_class_divergence": {str(k): v for k, v in div.items()},
        "divergence_std": float(np.std(list(div.values()))),
    }
    if class_counts is not None:
        head = np.array([class_counts.get(int(k), 0) >= tail_threshold for k in y_test])
        out["tail_threshold"] = tail_threshold
        out["head_acc"] = float(np.mean(hit[head])) if head.any() else None
        out["tail_acc"] = float(np.mean(hit[~head])) if (~head).any() else None
    return out


def embedding_centers(model: EmbeddingModel, U, y) -> ClassCenters:
    return ClassCenters.from_means(model.forward(U), y)
