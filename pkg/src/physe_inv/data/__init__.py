# Data pipeline package
from .dataset import (
    WINDOW_LENGTH,
    DatasetSplits,
    NormalizationStats,
    SequenceBatch,
    WindowSource,
    batch_iterator,
    build_dataset,
    build_full_source,
    make_windows,
    window_count,
)
from .series import DailyRecord, SynthParams, ingest_csv, series_arrays, synthesize_series, write_csv

__all__ = [
    'WINDOW_LENGTH', 'DailyRecord', 'DatasetSplits', 'NormalizationStats', 'SequenceBatch', 'SynthParams',
    'WindowSource', 'batch_iterator', 'build_dataset', 'build_full_source', 'ingest_csv', 'make_windows',
    'series_arrays', 'synthesize_series', 'window_count', 'write_csv',
]
