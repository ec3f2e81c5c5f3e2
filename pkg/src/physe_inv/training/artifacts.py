"""Run output files: training log, report, results table, plot data, config and checkpoint."""
import csv
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Union

from ..collector import write_metrics
from ..model import save_checkpoint

if TYPE_CHECKING:
    from ..config_handler import RunConfig
    from .trainer import EvaluationResult, RunReport, TrainOutcome

logger = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "L_total", "L_MSE", "L_PE", "L_CL")
RESULTS_HEADER = ["model", "split", "scl", "pe", "seed", "mse", "rmse"]
HISTOGRAM_HEADER = ["bin_left", "bin_right", "deviation_count", "target_count", "prediction_count"]
TIMESERIES_HEADER = ["index", "target", "predicted", "estimated", "alpha", "beta", "gamma"]


class TrainingLog:
    """Tab-separated per-epoch loss log; a no-op sink when ``path`` is None."""

    def __init__(self, path: Optional[Path]):
        self.path = path
        self._handle = None

    def __enter__(self) -> "TrainingLog":
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "w", encoding="utf-8", newline="")
            self._handle.write("\t".join(LOG_HEADER) + "\n")
        return self

    def write(self, row: Dict[str, float]) -> None:
        if self._handle is None:
            return
        values = [str(row["epoch"])] + [repr(float(row[key])) for key in LOG_HEADER[1:]]
        self._handle.write("\t".join(values) + "\n")
        self._handle.flush()

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def read_training_log(path: Union[str, Path]) -> List[Dict[str, float]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for record in csv.DictReader(handle, delimiter="\t"):
            rows.append({"epoch": int(record["epoch"]), **{k: float(record[k]) for k in LOG_HEADER[1:]}})
    return rows


def _flag(value: bool) -> str:
    return "true" if value else "false"


def write_results_csv(reports: Iterable["RunReport"], path: Union[str, Path],
                      include_variant: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = RESULTS_HEADER + (["cl_variant"] if include_variant else [])
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for report in reports:
            row = [report.model, repr(float(report.split)), _flag(report.scl), _flag(report.pe), report.seed,
                   repr(report.test_mse), repr(report.test_rmse)]
            if include_variant:
                row.append(report.cl_variant)
            writer.writerow(row)
    return path


def read_results_csv(path: Union[str, Path]) -> List[Dict[str, Any]]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for record in csv.DictReader(handle):
            row: Dict[str, Any] = dict(record)
            row["split"] = float(record["split"])
            row["scl"] = record["scl"] == "true"
            row["pe"] = record["pe"] == "true"
            row["seed"] = int(record["seed"])
            row["mse"] = float(record["mse"])
            row["rmse"] = float(record["rmse"])
            rows.append(row)
    return rows


def write_plot_data(out_dir: Union[str, Path], evaluation: "EvaluationResult") -> Path:
    """Box-plot statistics, shared-edge histogram and the predicted/estimated series."""
    plots = Path(out_dir) / "plots"
    plots.mkdir(parents=True, exist_ok=True)

    boxplot = {
        "deviation": evaluation.deviation_summary,
        "target": evaluation.target_summary,
        "prediction": evaluation.prediction_summary,
    }
    (plots / "boxplot.json").write_text(json.dumps(boxplot, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    histogram = evaluation.histogram
    edges = histogram["edges"]
    with open(plots / "histogram.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTOGRAM_HEADER)
        for i in range(len(edges) - 1):
            writer.writerow([repr(edges[i]), repr(edges[i + 1]), histogram["deviation_counts"][i],
                             histogram["target_counts"][i], histogram["prediction_counts"][i]])

    with open(plots / "timeseries.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TIMESERIES_HEADER)
        for row, index in enumerate(evaluation.end_index):
            estimated = ["", "", "", ""]
            if evaluation.estimated is not None:
                alpha, beta, gamma = evaluation.surjective[row]
                estimated = [repr(float(evaluation.estimated[row])), repr(float(alpha)), repr(float(beta)),
                             repr(float(gamma))]
            writer.writerow([int(index), repr(float(evaluation.targets[row])),
                             repr(float(evaluation.predictions[row]))] + estimated)
    return plots


def write_report(report: "RunReport", path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    return path


def write_run_artifacts(out_dir: Union[str, Path], config: "RunConfig", outcome: "TrainOutcome") -> Path:
    """Writes report.json, results.csv, config.json, plots/, metrics.prom and checkpoint/; returns the checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(outcome.report, out_dir / "report.json")
    write_results_csv([outcome.report], out_dir / "results.csv")
    (out_dir / "config.json").write_text(config.to_json(), encoding="utf-8")
    write_plot_data(out_dir, outcome.evaluation)
    write_metrics(out_dir / "metrics.prom", [outcome.report])
    checkpoint = save_checkpoint(out_dir / "checkpoint", outcome.model, outcome.dataset.stats, config.to_dict())
    logger.info(f"Wrote run artifacts to {out_dir}")
    return checkpoint
