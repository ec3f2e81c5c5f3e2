from datetime import date, timedelta

import numpy as np
import pytest

from physe_inv.data import (
    WINDOW_LENGTH,
    DailyRecord,
    NormalizationStats,
    batch_iterator,
    build_dataset,
    build_full_source,
    make_windows,
    series_arrays,
    window_count,
)
from physe_inv.exceptions import ContractError, DataError, DegenerateSeriesError
from physe_inv.physics import proxy_target_series


def test_window_count_and_shapes():
    assert window_count(48) == 39
    assert window_count(9) == 0
    windows = make_windows(np.arange(12.0))
    assert windows.shape == (3, WINDOW_LENGTH)
    np.testing.assert_array_equal(windows[2], np.arange(2.0, 12.0))
    assert make_windows(np.arange(5.0)).shape == (0, WINDOW_LENGTH)


def test_split_and_window_counts(series):
    dataset = build_dataset(series, 0.8, noise_sigma=0.1, seed=1)
    assert dataset.split_index == 64
    assert len(dataset.train) == 55
    assert len(dataset.test) == 7
    assert dataset.train.x.shape == (55, 10, 1)
    assert dataset.train.y.shape == (55, 1)
    assert dataset.test.end_index[0] == 64 + WINDOW_LENGTH - 1
    assert dataset.test.end_index[-1] == len(series) - 1


def test_statistics_come_from_the_training_portion_only(series):
    dataset = build_dataset(series, 0.8, seed=1)
    rho_s = series_arrays(series)["rho_s"]
    assert dataset.input_stats.mean == pytest.approx(rho_s[:64].mean())
    assert dataset.input_stats.std == pytest.approx(rho_s[:64].std())
    expected = (rho_s[64:74] - rho_s[:64].mean()) / rho_s[:64].std()
    np.testing.assert_allclose(dataset.test.x[0, :, 0], expected)


def test_targets_are_normalized_proxy_at_window_end(series):
    dataset = build_dataset(series, 0.8, seed=1)
    arrays = series_arrays(series)
    proxy = proxy_target_series(arrays["sic"], arrays["albedo"], arrays["rho_s"])
    expected = dataset.target_stats.apply(proxy[dataset.train.end_index])
    np.testing.assert_allclose(dataset.train.y[:, 0], expected)


def test_only_inputs_are_augmented(series):
    noisy = build_dataset(series, 0.8, noise_sigma=0.5, seed=1)
    clean = build_dataset(series, 0.8, noise_sigma=0.0, seed=1)
    np.testing.assert_array_equal(clean.train.x_aug, clean.train.x)
    assert not np.allclose(noisy.train.x_aug, noisy.train.x)
    np.testing.assert_array_equal(noisy.train.x, clean.train.x)
    np.testing.assert_array_equal(noisy.train.y, clean.train.y)


def test_same_seed_same_augmentation(series):
    first = build_dataset(series, 0.6, noise_sigma=0.2, seed=11)
    second = build_dataset(series, 0.6, noise_sigma=0.2, seed=11)
    np.testing.assert_array_equal(first.test.x_aug, second.test.x_aug)


def test_supplied_statistics_replace_fitted_ones(series):
    stats = (NormalizationStats(300.0, 10.0), NormalizationStats(5.0, 2.0))
    dataset = build_dataset(series, 0.8, seed=1, stats=stats)
    assert dataset.stats == stats
    assert dataset.test.x[0, 0, 0] == pytest.approx((series[64].rho_s - 300.0) / 10.0)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2])
def test_split_fraction_must_be_open_interval(series, fraction):
    with pytest.raises(ContractError):
        build_dataset(series, fraction)


def test_negative_noise_is_rejected(series):
    with pytest.raises(ContractError):
        build_dataset(series, 0.8, noise_sigma=-0.1)


@pytest.mark.parametrize("fraction", [0.1, 0.9])
def test_portions_shorter_than_a_window_are_rejected(series, fraction):
    with pytest.raises(DataError):
        build_dataset(series, fraction)


def test_short_series_is_rejected(series):
    with pytest.raises(DataError):
        build_dataset(series[:15], 0.5)


def test_constant_series_cannot_be_normalized():
    start = date(2000, 1, 1)
    flat = [DailyRecord(start + timedelta(days=i), 300.0, 0.9, 0.8) for i in range(40)]
    with pytest.raises(DegenerateSeriesError):
        build_dataset(flat, 0.5)


def test_normalization_round_trip():
    stats = NormalizationStats.fit(np.array([1.0, 2.0, 3.0, 4.0]))
    values = np.array([0.5, 4.5])
    np.testing.assert_allclose(stats.invert(stats.apply(values)), values)
    assert NormalizationStats.from_dict(stats.to_dict()) == stats


def test_full_source_covers_every_window(series):
    dataset = build_dataset(series, 0.8, seed=1)
    full = build_full_source(series, dataset.stats)
    assert len(full) == len(series) - WINDOW_LENGTH + 1
    np.testing.assert_array_equal(full.x_aug, full.x)
    np.testing.assert_allclose(full.x[-1], dataset.test.x[-1])


def test_batches_visit_each_window_once(series):
    source = build_dataset(series, 0.8, seed=1).train
    batches = list(batch_iterator(source, 16, shuffle_seed=4))
    assert [len(b) for b in batches] == [16, 16, 16, 7]
    seen = np.concatenate([b.indices for b in batches])
    np.testing.assert_array_equal(np.sort(seen), np.arange(len(source)))
    np.testing.assert_array_equal(batches[0].x, source.x[batches[0].indices])


def test_batch_order_depends_only_on_seed(series):
    source = build_dataset(series, 0.8, seed=1).train
    order = lambda seed: np.concatenate([b.indices for b in batch_iterator(source, 8, shuffle_seed=seed)])
    np.testing.assert_array_equal(order(3), order(3))
    assert not np.array_equal(order(3), order(4))
    np.testing.assert_array_equal(
        np.concatenate([b.indices for b in batch_iterator(source, 8)]), np.arange(len(source))
    )


def test_batch_size_must_be_positive(series):
    source = build_dataset(series, 0.8, seed=1).train
    with pytest.raises(ContractError):
        next(batch_iterator(source, 0))


def test_thirty_year_series_window_counts():
    from physe_inv.data import synthesize_series

    dataset = build_dataset(synthesize_series(10958, seed=1), 0.8, seed=7)
    assert dataset.train.x.shape == (8757, 10, 1)
    assert dataset.test.x.shape == (2183, 10, 1)
