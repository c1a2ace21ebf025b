"""Intent-aware sequential recommendation.

A causal transformer over interaction sequences is trained EM-style: each
epoch clusters pooled sequence representations into latent intent
prototypes, then optimizes a weighted sum of a next-item objective, an
intent contrastive loss against the prototypes, and a sequence-level
contrastive loss over augmented views.
"""

from .augment import AugmentConfig, crop, mask, reorder, sample_view_pair
from .clustering import IntentModel, assign, estep, kmeans_fit
from .data import (
    DatasetError,
    InteractionDataset,
    PaddedSequence,
    ParseError,
    SplitDataset,
    five_core_filter,
    group_by_length,
    inject_test_noise,
    load_interactions,
    pad_truncate,
    split_leave_one_out,
)
from .encoder import (
    AdamState,
    EncoderConfig,
    EncoderParams,
    SequenceRepresentation,
    adam_step,
    aggregate,
    encode_batch,
    forward,
    gradients,
    init_params,
)
from .evaluation import EvalResult, evaluate, hr_at_k, ndcg_at_k, rank_target, robustness_report
from .losses import (
    BatchViews,
    LossWeights,
    intent_contrast_loss,
    multi_task_loss,
    next_item_loss,
    sample_negative,
    sequence_contrast_loss,
)
from .trainer import EpochRecord, TrainConfig, TrainReport, train

__version__ = "0.1.0"
