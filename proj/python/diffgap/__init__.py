"""Conditional diffusion between paired contrastive embeddings."""

from ._diffgap import (
    Checkpoint,
    ConceptSpec,
    FormatError,
    ConfigError,
    NoiseSchedule,
    RetrievalReport,
    TrainConfig,
    contrastive_loss,
    cosine_retrieval,
    ddim_timesteps,
    diffgap_retrieval,
    generate,
    generate_corpus,
    load_checkpoint,
    load_corpus,
    param_count,
    recall_at_k,
    run,
    save_checkpoint,
    save_corpus,
    time_embedding,
    train,
)

__all__ = [
    "Checkpoint",
    "ConceptSpec",
    "ConfigError",
    "FormatError",
    "NoiseSchedule",
    "RetrievalReport",
    "TrainConfig",
    "contrastive_loss",
    "cosine_retrieval",
    "ddim_timesteps",
    "diffgap_retrieval",
    "generate",
    "generate_corpus",
    "load_checkpoint",
    "load_corpus",
    "param_count",
    "recall_at_k",
    "run",
    "save_checkpoint",
    "save_corpus",
    "time_embedding",
    "train",
]
