from types import SimpleNamespace

from physe_inv.collector import RunReportCollector, write_metrics


def make_report(**changes):
    report = dict(
        model="physe-inv", split=0.8, scl=True, pe=False, cl_variant="nt_xent", seed=7,
        test_mse=0.25, test_rmse=0.5, initial_test_mse=1.2, wall_clock_seconds=3.5,
        deviation_summary={"outliers": 2},
        history=[{"epoch": 1, "L_total": 1.5, "L_MSE": 1.0, "L_PE": 0.0, "L_CL": 1.0}],
    )
    report.update(changes)
    return SimpleNamespace(**report)


def test_collector_exposes_run_gauges():
    families = {family.name: family for family in RunReportCollector([make_report()]).collect()}
    assert set(families) == {
        "physe_inv_test_mse", "physe_inv_test_rmse", "physe_inv_initial_test_mse",
        "physe_inv_final_loss", "physe_inv_run_duration_seconds", "physe_inv_deviation_outliers",
    }
    [sample] = families["physe_inv_test_mse"].samples
    assert sample.value == 0.25
    assert sample.labels == {"model": "physe-inv", "split": "0.8", "scl": "true", "pe": "false",
                             "cl_variant": "nt_xent", "seed": "7"}
    components = {s.labels["component"]: s.value for s in families["physe_inv_final_loss"].samples}
    assert components == {"L_total": 1.5, "L_MSE": 1.0, "L_PE": 0.0, "L_CL": 1.0}


def test_runs_without_history_have_no_loss_samples():
    families = {f.name: f for f in RunReportCollector([make_report(history=[])]).collect()}
    assert families["physe_inv_final_loss"].samples == []


def test_write_metrics_text_format(tmp_path):
    path = write_metrics(tmp_path / "metrics" / "run.prom", [make_report(), make_report(seed=8, test_mse=0.5)])
    text = path.read_text()
    assert "# TYPE physe_inv_test_mse gauge" in text
    assert 'seed="8"' in text and 'seed="7"' in text
