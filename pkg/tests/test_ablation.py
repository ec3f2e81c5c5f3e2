import json

import pytest

from physe_inv.exceptions import ContractError
from physe_inv.training import AblationCell, AblationGrid, direction_of_effect, read_results_csv, run_ablation
from physe_inv.training.ablation import CellResult, summarize


def test_default_grid_has_twelve_cells_in_axis_order():
    cells = AblationGrid().cells()
    assert len(cells) == 12
    assert cells[0] == AblationCell("physe-inv", 0.8, True, True, "nt_xent", 7)
    assert cells[1] == AblationCell("physe-inv", 0.8, True, False, "nt_xent", 7)
    assert cells[-1] == AblationCell("physe-inv", 0.5, False, False, "nt_xent", 7)


def test_full_study_grid_size():
    grid = AblationGrid(seeds=(1, 2, 3, 4, 5))
    assert len(grid.cells()) == 60


def test_empty_axis_is_rejected():
    with pytest.raises(ContractError):
        AblationGrid(pe=())


def test_cell_labels_are_unique():
    grid = AblationGrid(models=("physe-inv", "lstm"), seeds=(1, 2))
    labels = [cell.label() for cell in grid.cells()]
    assert len(set(labels)) == len(labels)


def test_direction_of_effect_flags_each_toggle():
    summary = [
        {"model": "physe-inv", "split": 0.8, "scl": scl, "pe": pe, "cl_variant": "nt_xent", "median_mse": mse}
        for scl, pe, mse in [(True, True, 0.10), (True, False, 0.20), (False, True, 0.30), (False, False, 0.15)]
    ]
    checks = {(c["effect"], tuple(c["held"].items())): c for c in direction_of_effect(summary)}
    assert len(checks) == 4
    assert checks[("pe", (("scl", True),))]["passed"] is True
    assert checks[("pe", (("scl", False),))]["passed"] is False
    assert checks[("scl", (("pe", True),))]["passed"] is True
    # 0.20 <= 0.15 + 0.02 fails, the threshold only absorbs small gaps
    assert checks[("scl", (("pe", False),))]["passed"] is False


def test_summary_takes_medians_over_successful_seeds():
    class Report:
        def __init__(self, mse):
            self.test_mse, self.test_rmse = mse, mse ** 0.5

    cell = lambda seed: AblationCell("lstm", 0.6, False, True, "nt_xent", seed)
    results = [CellResult(cell(1), Report(0.4)), CellResult(cell(2), Report(0.1)),
               CellResult(cell(3), Report(0.3)), CellResult(cell(4), error="DataError: boom")]
    [row] = summarize(results)
    assert row["seeds"] == 3 and row["failed"] == 1
    assert row["median_mse"] == pytest.approx(0.3)


def test_run_ablation_writes_results_and_records_failures(tiny_config, tmp_path):
    base = tiny_config.replace(epochs=1)
    # a 0.1 split leaves fewer training records than one window
    grid = AblationGrid(splits=(0.8, 0.1), scl=(True, False), pe=(True,), seeds=(3,))
    outcome = run_ablation(base, grid, tmp_path / "ablation", workers=2)

    assert [r.cell for r in outcome.results] == grid.cells()
    assert len(outcome.reports) == 2
    assert len(outcome.failures) == 2
    assert all("DataError" in r.error for r in outcome.failures)

    out = tmp_path / "ablation"
    rows = read_results_csv(out / "results.csv")
    assert [(r["split"], r["scl"]) for r in rows] == [(0.8, True), (0.8, False)]
    assert len(json.loads((out / "failures.json").read_text())) == 2
    assert (out / "ablation_summary.csv").is_file()
    assert (out / "metrics.prom").is_file()
    assert (out / "cells" / grid.cells()[0].label() / "report.json").is_file()

    direction = json.loads((out / "direction_of_effect.json").read_text())
    assert {d["effect"] for d in direction} == {"scl"}


def test_ablation_cells_match_standalone_runs(tiny_config):
    from physe_inv.training import train

    base = tiny_config.replace(epochs=1)
    grid = AblationGrid(splits=(0.8,), scl=(False,), pe=(True,), seeds=(3,))
    [result] = run_ablation(base, grid).results
    alone = train(base.replace(scl=False, pe=True, seed=3)).report
    assert result.report.deterministic_view() == alone.deterministic_view()


@pytest.mark.slow
def test_direction_of_effect_over_five_seeds(tmp_path):
    from physe_inv import RunConfig

    grid = AblationGrid(splits=(0.5,), seeds=(0, 1, 2, 3, 4))
    outcome = run_ablation(RunConfig(), grid, tmp_path / "ablation", workers=4)
    checks = {record["effect"]: record for record in outcome.direction if record["split"] == 0.5
              and record["held"] in ({"scl": True}, {"pe": True})}
    assert set(checks) == {"pe", "scl"}
    assert all(record["passed"] is not None for record in checks.values())
    assert (tmp_path / "ablation" / "direction_of_effect.json").exists()
