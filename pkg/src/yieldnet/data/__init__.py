from .io import Dataset, atomic_write_bytes, atomic_write_text, load_dataset, write_dataset
from .preprocess import (
    assemble_sequences,
    compute_avg_yields,
    impute_column_mean,
    impute_management,
    substitute_weather,
    summarize_dataset,
    weekly_average,
)
from .records import CountyYearRecord, SequenceSample, guard_targets, make_record
from .synthetic import SyntheticConfig, gen_synthetic, heat_threshold

__all__ = [
    "CountyYearRecord",
    "Dataset",
    "SequenceSample",
    "SyntheticConfig",
    "assemble_sequences",
    "atomic_write_bytes",
    "atomic_write_text",
    "compute_avg_yields",
    "gen_synthetic",
    "guard_targets",
    "heat_threshold",
    "impute_column_mean",
    "impute_management",
    "load_dataset",
    "make_record",
    "substitute_weather",
    "summarize_dataset",
    "weekly_average",
    "write_dataset",
]
