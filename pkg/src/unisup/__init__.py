"""Supervision-target synthesis and graded retrieval evaluation for bi-encoder training."""

from unisup.datamodel import (
    EngagementCounts,
    PipelineConfig,
    QipRecord,
    load_default_config,
)

__version__ = "0.1.0"

__all__ = [
    "EngagementCounts",
    "PipelineConfig",
    "QipRecord",
    "load_default_config",
    "__version__",
]
