"""Windowed, normalized and augmented training/test sources built from a daily series."""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ContractError, DataError, DegenerateSeriesError
from ..physics import DEFAULT_CONSTANTS, PhysicalConstants, proxy_target_series
from .series import MIN_SERIES_LENGTH, DailyRecord, series_arrays

logger = logging.getLogger(__name__)

WINDOW_LENGTH = 10


@dataclass(frozen=True)
class NormalizationStats:
    """Z-score statistics; ``std`` is the population standard deviation."""

    mean: float
    std: float

    @classmethod
    def fit(cls, values: np.ndarray, label: str = "series") -> "NormalizationStats":
        values = np.asarray(values, dtype=np.float64)
        std = float(np.std(values))
        if not math.isfinite(std) or std == 0.0:
            raise DegenerateSeriesError(f"{label} has zero variance on the training split; cannot normalize")
        return cls(mean=float(np.mean(values)), std=std)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, payload: Dict[str, float]) -> "NormalizationStats":
        return cls(mean=float(payload["mean"]), std=float(payload["std"]))


@dataclass
class WindowSource:
    """All windows of one chronological portion.

    x and x_aug are [W, 10, 1]; y is [W, 1]; end_index holds the series index of
    each window's final step.
    """

    x: np.ndarray
    x_aug: np.ndarray
    y: np.ndarray
    end_index: np.ndarray

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0


@dataclass
class SequenceBatch:
    x: np.ndarray
    x_aug: np.ndarray
    y: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.x.shape[0])


@dataclass
class DatasetSplits:
    train: WindowSource
    test: WindowSource
    input_stats: NormalizationStats
    target_stats: NormalizationStats
    split_index: int

    @property
    def stats(self) -> Tuple[NormalizationStats, NormalizationStats]:
        return self.input_stats, self.target_stats


def window_count(portion_length: int, length: int = WINDOW_LENGTH) -> int:
    return max(0, portion_length - length + 1)


def make_windows(values: np.ndarray, length: int = WINDOW_LENGTH) -> np.ndarray:
    """Stride-1 windows as a [W, length] copy; empty when the portion is too short."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < length:
        return np.empty((0, length))
    return sliding_window_view(values, length).copy()


def _augment(x: np.ndarray, noise_sigma: float, rng: np.random.Generator) -> np.ndarray:
    if noise_sigma == 0.0:
        return x.copy()
    return x + rng.normal(0.0, noise_sigma, size=x.shape)


def _portion(inputs: np.ndarray, targets: np.ndarray, offset: int, noise_sigma: float,
             rng: np.random.Generator) -> WindowSource:
    x = make_windows(inputs)[..., None]
    y = make_windows(targets)[:, -1:]
    end_index = offset + np.arange(x.shape[0]) + WINDOW_LENGTH - 1
    return WindowSource(x=x, x_aug=_augment(x, noise_sigma, rng), y=y, end_index=end_index)


def build_dataset(
    series: Sequence[DailyRecord],
    split_fraction: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    noise_sigma: float = 0.1,
    seed: int = 0,
    stats: Optional[Tuple[NormalizationStats, NormalizationStats]] = None,
) -> DatasetSplits:
    """Proxy target, chronological split, train-only z-scores, windows and augmented views.

    ``stats`` replaces the fitted (input, target) statistics, e.g. those stored in a
    checkpoint, so a saved model sees the same scaling at evaluation time.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ContractError(f"split_fraction must lie strictly between 0 and 1, got {split_fraction}")
    if noise_sigma < 0.0:
        raise ContractError(f"noise_sigma must be non-negative, got {noise_sigma}")
    if len(series) < MIN_SERIES_LENGTH:
        raise DataError(f"series has {len(series)} records; at least {MIN_SERIES_LENGTH} are required")

    arrays = series_arrays(series)
    target = proxy_target_series(arrays["sic"], arrays["albedo"], arrays["rho_s"], constants)
    inputs = arrays["rho_s"]

    split_index = int(math.floor(split_fraction * len(series)))
    for label, size in (("train", split_index), ("test", len(series) - split_index)):
        if size < WINDOW_LENGTH:
            raise DataError(
                f"{label} portion has {size} records, fewer than the window length {WINDOW_LENGTH}"
            )

    if stats is None:
        input_stats = NormalizationStats.fit(inputs[:split_index], "rho_s")
        target_stats = NormalizationStats.fit(target[:split_index], "proxy target")
    else:
        input_stats, target_stats = stats

    x_norm = input_stats.apply(inputs)
    y_norm = target_stats.apply(target)

    rng = np.random.default_rng(seed)
    train = _portion(x_norm[:split_index], y_norm[:split_index], 0, noise_sigma, rng)
    test = _portion(x_norm[split_index:], y_norm[split_index:], split_index, noise_sigma, rng)
    logger.info(
        f"Built dataset: {len(series)} records split at {split_index}, "
        f"{len(train)} train and {len(test)} test windows"
    )
    return DatasetSplits(train=train, test=test, input_stats=input_stats,
                         target_stats=target_stats, split_index=split_index)


def build_full_source(
    series: Sequence[DailyRecord],
    stats: Tuple[NormalizationStats, NormalizationStats],
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> WindowSource:
    """Every window of the series under given statistics, without augmentation."""
    if len(series) < WINDOW_LENGTH:
        raise DataError(f"series has {len(series)} records, fewer than the window length {WINDOW_LENGTH}")
    arrays = series_arrays(series)
    target = proxy_target_series(arrays["sic"], arrays["albedo"], arrays["rho_s"], constants)
    input_stats, target_stats = stats
    return _portion(input_stats.apply(arrays["rho_s"]), target_stats.apply(target), 0, 0.0,
                    np.random.default_rng(0))


def batch_iterator(source: WindowSource, batch_size: int,
                   shuffle_seed: Optional[int] = None) -> Iterator[SequenceBatch]:
    """Every window exactly once, in seeded shuffled order (or in order when unseeded)."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be at least 1, got {batch_size}")
    if source.is_empty:
        logger.warning("Batch source is empty; no batches will be produced")
        return

    n = len(source)
    order = np.arange(n) if shuffle_seed is None else np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield SequenceBatch(x=source.x[idx], x_aug=source.x_aug[idx], y=source.y[idx], indices=idx)
