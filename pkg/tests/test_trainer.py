import json

import numpy as np
import pytest

from physe_inv.data import WindowSource
from physe_inv.exceptions import ContractError, NumericError, TrainingDivergedError
from physe_inv.model import SequenceModel, load_checkpoint
from physe_inv.training import (
    RunReport,
    box_summary,
    evaluate,
    read_results_csv,
    read_training_log,
    regression_metrics,
    shared_histogram,
    train,
)
from physe_inv.training import trainer as trainer_module


def test_box_summary_quartiles_and_outliers():
    summary = box_summary(np.array([1.0, 2.0, 3.0, 4.0, 100.0]))
    assert summary["median"] == 3.0
    assert (summary["q1"], summary["q3"], summary["iqr"]) == (2.0, 4.0, 2.0)
    assert summary["whisker_high"] == 4.0
    assert summary["whisker_low"] == 1.0
    assert summary["outliers"] == 1
    assert summary["max"] == 100.0
    with pytest.raises(ContractError):
        box_summary(np.array([]))


def test_shared_histogram_uses_common_edges():
    hist = shared_histogram(4, a=np.array([0.0, 1.0, 2.0]), b=np.array([4.0]))
    assert hist["edges"] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert hist["a_counts"] == [1, 1, 1, 0]
    assert hist["b_counts"] == [0, 0, 0, 1]


def test_regression_metrics():
    metrics = regression_metrics(np.array([1.0, 3.0]), np.array([0.0, 0.0]))
    assert metrics == {"mse": 5.0, "rmse": pytest.approx(np.sqrt(5.0))}
    with pytest.raises(ContractError):
        regression_metrics(np.array([1.0]), np.array([1.0, 2.0]))


def test_evaluate_rejects_empty_source(tiny_arch):
    empty = WindowSource(np.empty((0, 10, 1)), np.empty((0, 10, 1)), np.empty((0, 1)), np.empty(0, dtype=int))
    with pytest.raises(ContractError):
        evaluate(SequenceModel("lstm", False, tiny_arch), empty)


def test_train_writes_every_artifact(tiny_config, tmp_path):
    out = tmp_path / "run"
    outcome = train(tiny_config, out)
    report = outcome.report

    assert report.epochs == 2 and len(report.history) == 2
    assert report.n_train == 55 and report.n_test == 7
    assert report.test_rmse == pytest.approx(np.sqrt(report.test_mse))
    assert report.config_hash == tiny_config.config_hash()
    for name in ("report.json", "results.csv", "config.json", "training_log.tsv", "metrics.prom",
                 "checkpoint/manifest.json", "checkpoint/weights.bin",
                 "plots/boxplot.json", "plots/histogram.csv", "plots/timeseries.csv"):
        assert (out / name).is_file(), name

    assert RunReport.from_json((out / "report.json").read_text()) == report
    logged = read_training_log(out / "training_log.tsv")
    assert logged == report.history
    [row] = read_results_csv(out / "results.csv")
    assert (row["model"], row["split"], row["scl"], row["pe"], row["seed"]) == ("physe-inv", 0.8, True, True, 3)
    assert row["mse"] == report.test_mse
    assert json.loads((out / "config.json").read_text())["epochs"] == 2
    assert len((out / "plots/timeseries.csv").read_text().splitlines()) == 1 + report.n_test


def test_history_components_add_up(tiny_config):
    report = train(tiny_config).report
    for row in report.history:
        expected = row["L_MSE"] + tiny_config.lambda_pe * row["L_PE"] + tiny_config.lambda_cl * row["L_CL"]
        assert row["L_total"] == pytest.approx(expected)
        assert row["L_PE"] > 0.0 and row["L_CL"] > 0.0


def test_training_is_deterministic(tiny_config):
    first = train(tiny_config).report
    second = train(tiny_config).report
    assert first.deterministic_view() == second.deterministic_view()


def test_zero_epochs_reports_initial_weights(tiny_config):
    report = train(tiny_config.replace(epochs=0)).report
    assert report.history == []
    assert report.test_mse == report.initial_test_mse


@pytest.mark.parametrize("model", ["lstm", "bilstm"])
def test_baselines_without_estimation_or_contrast(tiny_config, model):
    report = train(tiny_config.replace(model=model, pe=False, scl=False, epochs=1)).report
    assert report.history[0]["L_PE"] == 0.0
    assert report.history[0]["L_CL"] == 0.0
    assert report.history[0]["L_total"] == report.history[0]["L_MSE"]


def test_stability_variant_trains(tiny_config):
    report = train(tiny_config.replace(cl_variant="stability", epochs=1)).report
    assert 0.0 <= report.history[0]["L_CL"] <= 2.0


def test_checkpoint_reproduces_test_metrics(tiny_config, tmp_path):
    outcome = train(tiny_config, tmp_path / "run")
    restored = load_checkpoint(outcome.checkpoint)
    again = evaluate(restored.model, outcome.dataset.test, tiny_config.histogram_bins)
    assert again.mse == outcome.report.test_mse


def test_divergence_restores_last_good_weights(tiny_config, tmp_path, monkeypatch):
    real_step = trainer_module.adam_step
    calls = {"n": 0}

    def failing_step(params, grads, state):
        calls["n"] += 1
        if calls["n"] > 4:  # four batches per epoch; fail early in epoch 2
            raise NumericError("Non-finite gradient for parameter 'head.w'")
        return real_step(params, grads, state)

    monkeypatch.setattr(trainer_module, "adam_step", failing_step)
    with pytest.raises(TrainingDivergedError) as exc:
        train(tiny_config, tmp_path / "run")
    assert "epoch 2" in str(exc.value)
    assert exc.value.checkpoint is not None
    assert read_training_log(tmp_path / "run" / "training_log.tsv")[0]["epoch"] == 1
    assert load_checkpoint(exc.value.checkpoint).model.kind == "physe-inv"


@pytest.mark.slow
def test_desk_scale_training_halves_test_error(tmp_path):
    from physe_inv import RunConfig

    report = train(RunConfig(), tmp_path / "desk").report
    print(f"desk-scale wall clock: {report.wall_clock_seconds:.1f} s")
    assert report.test_mse <= 0.5 * report.initial_test_mse


def test_constant_prediction_error_splits_into_variance_and_bias(tiny_arch, rng):
    model = SequenceModel("lstm", False, tiny_arch, seed=0)
    for _, tensor in model.params.items():
        tensor.data[...] = 0.0
    model.params["head.b"].data[...] = 0.75
    y = rng.normal(1.5, 2.0, size=(100, 1))
    x = rng.normal(size=(100, 10, 1))
    source = WindowSource(x, x.copy(), y, np.arange(100))
    result = evaluate(model, source, bins=8)
    np.testing.assert_array_equal(result.predictions, np.full(100, 0.75))
    assert result.mse == pytest.approx(np.var(y) + (0.75 - y.mean()) ** 2, rel=1e-12)
