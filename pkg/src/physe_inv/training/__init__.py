# Training and evaluation package
from .ablation import AblationCell, AblationGrid, AblationOutcome, CellResult, direction_of_effect, run_ablation
from .artifacts import read_results_csv, read_training_log, write_plot_data, write_report, write_results_csv
from .optimizer import OptimizerState, adam_step
from .trainer import (
    EvaluationResult,
    RunReport,
    TrainOutcome,
    box_summary,
    evaluate,
    load_series,
    regression_metrics,
    shared_histogram,
    train,
    train_step,
)

__all__ = [
    'AblationCell', 'AblationGrid', 'AblationOutcome', 'CellResult', 'EvaluationResult', 'OptimizerState',
    'RunReport', 'TrainOutcome', 'adam_step', 'box_summary', 'direction_of_effect', 'evaluate', 'load_series',
    'read_results_csv', 'read_training_log', 'regression_metrics', 'run_ablation', 'shared_histogram', 'train',
    'train_step', 'write_plot_data', 'write_report', 'write_results_csv',
]
