"""Per-modality batch normalization with a desk-scale two-modality retrieval
trainer, distribution-gap analyzer, and experiment service."""

from .data import (ModalityBatch, PKBatchSpec, PKSampler, SyntheticDataset,
                   SyntheticDatasetSpec, generate_dataset, sample_pk_batch)
from .gap import GapReport, histogram, inter_batch_gap, intra_batch_gap, per_stage_gap_trace
from .model import Model, ModelConfig, build_model
from .norm import NormConfig, NormKind, NormLayer
from .retrieval import RetrievalResult, evaluate_embeddings
from .schedule import TrainSchedule, lr_at
from .tensor import Tensor4, channel_mean, channel_var, global_avg_pool
from .train import evaluate_retrieval, train

__version__ = "0.1.0"
