"""Rotation-based feature augmentation on the unit hypersphere."""
from .errors import *  # noqa: F401,F403
from .geometry import (RotationPlan, degenerated_sft, normalize, rodrigues_rotation, rotation_plan,
                       schmidt_pair, sft_transform, translation_transform)
from .kernels import BACKEND
from .scheduler import (AugmentedBatch, SchedulerConfig, balanced_augment, combined_loss,
                        unbalanced_augment)
from .stats import (ClassCenters, GaussianApprox, ScatterReport, analyze, class_divergence,
                    degeneration_distance, eigen_spectrum_report, gaussian_approximation,
                    orthogonality_ratio, scatter_matrices, update_centers)
from .synthetic import LabeledDataset, SyntheticSpec, generate, make_longtail
from .training import (EmbeddingModel, TrainConfig, TrainState, TripletLossSpec, evaluate, forward,
                       train, train_step, triplet_loss)

__version__ = "0.1.0"
