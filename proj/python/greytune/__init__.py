"""Grey-box meta-optimization for LLM finetuning pipelines."""

from greytune._core import (
    DataError,
    Surrogate,
    TeacherError,
    UsageError,
    augmentation_count,
    benchmark_replay,
    chunk_text,
    dataset_meta_features,
    default_config,
    encode_config,
    expected_improvement,
    generate_dataset,
    meta_train,
    mutate_config,
    optimize_replay,
    render_prompt,
    sample_config,
    select_eval_indices,
    synth_store,
    tokenize,
    validate_config,
    write_fixtures,
)

__all__ = [
    "DataError",
    "Surrogate",
    "TeacherError",
    "UsageError",
    "augmentation_count",
    "benchmark_replay",
    "chunk_text",
    "dataset_meta_features",
    "default_config",
    "encode_config",
    "expected_improvement",
    "generate_dataset",
    "meta_train",
    "mutate_config",
    "optimize_replay",
    "render_prompt",
    "sample_config",
    "select_eval_indices",
    "synth_store",
    "tokenize",
    "validate_config",
    "write_fixtures",
]
