from prometheus_client.core import GaugeMetricFamily, CollectorRegistry
from prometheus_client import write_to_textfile
from pathlib import Path
from typing import Iterable, List, Sequence, Union
import logging

logger = logging.getLogger(__name__)

RUN_LABELS = ['model', 'split', 'scl', 'pe', 'cl_variant', 'seed']


def add_run_labels(metric_family_class, name, documentation, labels):
    return metric_family_class(name, documentation, labels=RUN_LABELS + labels)


class RunReportCollector:
    """
    Exposes finished run reports as gauges.
    Any object with the RunReport attributes (model, split, scl, pe, seed, test_mse, ...) works.
    """
    def __init__(self, reports: Sequence):
        self.reports = list(reports)

    def _run_labels(self, report) -> List[str]:
        return [report.model, repr(float(report.split)), str(report.scl).lower(), str(report.pe).lower(), report.cl_variant,
                str(report.seed)]

    def collect(self) -> Iterable[GaugeMetricFamily]:
        test_mse = add_run_labels(GaugeMetricFamily, 'physe_inv_test_mse', 'Final-step test MSE in normalized units', [])
        test_rmse = add_run_labels(GaugeMetricFamily, 'physe_inv_test_rmse', 'Final-step test RMSE in normalized units', [])
        initial_mse = add_run_labels(GaugeMetricFamily, 'physe_inv_initial_test_mse', 'Test MSE of the initial weights', [])
        final_loss = add_run_labels(GaugeMetricFamily, 'physe_inv_final_loss', 'Mean training loss of the last epoch per component', ['component'])
        duration = add_run_labels(GaugeMetricFamily, 'physe_inv_run_duration_seconds', 'Wall-clock duration of the run', [])
        outliers = add_run_labels(GaugeMetricFamily, 'physe_inv_deviation_outliers', 'Test deviations beyond 1.5 IQR from the quartiles', [])

        for report in self.reports:
            labels = self._run_labels(report)
            test_mse.add_metric(labels, report.test_mse)
            test_rmse.add_metric(labels, report.test_rmse)
            initial_mse.add_metric(labels, report.initial_test_mse)
            duration.add_metric(labels, report.wall_clock_seconds)
            outliers.add_metric(labels, report.deviation_summary.get('outliers', 0))
            if report.history:
                last = report.history[-1]
                for component in ('L_total', 'L_MSE', 'L_PE', 'L_CL'):
                    final_loss.add_metric(labels + [component], last[component])

        yield test_mse
        yield test_rmse
        yield initial_mse
        yield final_loss
        yield duration
        yield outliers


def write_metrics(path: Union[str, Path], reports: Sequence) -> Path:
    """Writes the reports in Prometheus text format through a private registry."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    registry = CollectorRegistry()
    registry.register(RunReportCollector(reports))
    write_to_textfile(str(path), registry)
    logger.debug(f"Wrote metrics for {len(reports)} run(s) to {path}")
    return path
