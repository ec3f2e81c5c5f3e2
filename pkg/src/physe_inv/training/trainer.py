"""Training loop, evaluation metrics and distribution summaries."""
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..autodiff import Tape, backward
from ..config_handler import RunConfig
from ..data import (
    DailyRecord,
    DatasetSplits,
    SequenceBatch,
    SynthParams,
    WindowSource,
    batch_iterator,
    build_dataset,
    ingest_csv,
    synthesize_series,
)
from ..exceptions import ContractError, NumericError, TrainingDivergedError
from ..model import SequenceModel, save_checkpoint
from ..objectives import LossWeights, contrastive_loss, mse_loss, pe_loss, total_loss
from .artifacts import TrainingLog, write_run_artifacts
from .optimizer import OptimizerState, adam_step

logger = logging.getLogger(__name__)

WHISKER_IQR = 1.5
EVAL_BATCH_SIZE = 256
LOSS_COLUMNS = ("L_total", "L_MSE", "L_PE", "L_CL")


def box_summary(values: np.ndarray) -> Dict[str, float]:
    """Median, quartiles, whiskers at the furthest points within 1.5 IQR, outlier count."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError("box_summary: no values")
    q1, median, q3 = (float(q) for q in np.percentile(values, [25, 50, 75]))
    iqr = q3 - q1
    low_fence, high_fence = q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr
    inside = values[(values >= low_fence) & (values <= high_fence)]
    return {
        "count": int(values.size),
        "median": median,
        "q1": q1,
        "q3": q3,
        "iqr": iqr,
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": int(values.size - inside.size),
        "min": float(values.min()),
        "max": float(values.max()),
    }


def shared_histogram(bins: int, **series: np.ndarray) -> Dict[str, List[float]]:
    """Equal-width bins over the pooled [min, max] of every series, counted per series."""
    if bins < 1:
        raise ContractError(f"histogram needs at least one bin, got {bins}")
    pooled = np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in series.values()])
    edges = np.histogram_bin_edges(pooled, bins=bins)
    result = {"edges": edges.tolist()}
    for label, values in series.items():
        counts, _ = np.histogram(values, bins=edges)
        result[f"{label}_counts"] = counts.astype(int).tolist()
    return result


def regression_metrics(predictions: np.ndarray, targets: np.ndarray) -> Dict[str, float]:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.size == 0:
        raise ContractError("regression_metrics: no predictions")
    if predictions.shape != targets.shape:
        raise ContractError(f"regression_metrics: shapes {predictions.shape} and {targets.shape} differ")
    mse = float(np.mean((predictions - targets) ** 2))
    return {"mse": mse, "rmse": math.sqrt(mse)}


@dataclass
class EvaluationResult:
    mse: float
    rmse: float
    predictions: np.ndarray
    targets: np.ndarray
    estimated: Optional[np.ndarray]
    surjective: Optional[np.ndarray]  # [W, 3] (alpha, beta, gamma)
    end_index: np.ndarray
    deviation_summary: Dict[str, float]
    target_summary: Dict[str, float]
    prediction_summary: Dict[str, float]
    histogram: Dict[str, List[float]]

    def metrics(self) -> Dict[str, Any]:
        return {
            "mse": self.mse,
            "rmse": self.rmse,
            "deviation_summary": self.deviation_summary,
            "target_summary": self.target_summary,
            "prediction_summary": self.prediction_summary,
            "histogram": self.histogram,
        }


def evaluate(model: SequenceModel, source: WindowSource, bins: int = 50,
             batch_size: int = EVAL_BATCH_SIZE) -> EvaluationResult:
    """Eval-mode final-step metrics; deviations are prediction minus target in normalized units."""
    if source.is_empty:
        raise ContractError("evaluate: the evaluation source holds no windows")

    predictions, estimated, surjective = [], [], []
    for batch in batch_iterator(source, batch_size):
        result = model.forward(batch.x, train_mode=False)
        predictions.append(result.prediction.data)
        if result.h_est_steps is not None:
            estimated.append(result.h_est_steps.data[:, -1])
            surjective.append(result.surjective.numpy())

    predictions = np.concatenate(predictions)
    targets = source.y[:, 0].copy()
    metrics = regression_metrics(predictions, targets)
    deviations = predictions - targets
    target_anomaly = targets - targets.mean()
    prediction_anomaly = predictions - predictions.mean()

    return EvaluationResult(
        mse=metrics["mse"],
        rmse=metrics["rmse"],
        predictions=predictions,
        targets=targets,
        estimated=np.concatenate(estimated) if estimated else None,
        surjective=np.concatenate(surjective) if surjective else None,
        end_index=source.end_index.copy(),
        deviation_summary=box_summary(deviations),
        target_summary=box_summary(target_anomaly),
        prediction_summary=box_summary(prediction_anomaly),
        histogram=shared_histogram(bins, deviation=deviations, target=target_anomaly,
                                   prediction=prediction_anomaly),
    )


@dataclass
class RunReport:
    model: str
    split: float
    scl: bool
    pe: bool
    seed: int
    cl_variant: str
    epochs: int
    n_train: int
    n_test: int
    initial_test_mse: float
    test_mse: float
    test_rmse: float
    history: List[Dict[str, float]] = field(default_factory=list)
    deviation_summary: Dict[str, float] = field(default_factory=dict)
    target_summary: Dict[str, float] = field(default_factory=dict)
    prediction_summary: Dict[str, float] = field(default_factory=dict)
    histogram: Dict[str, List[float]] = field(default_factory=dict)
    config_hash: str = ""
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def deterministic_view(self) -> Dict[str, Any]:
        """Everything except wall-clock time."""
        payload = self.to_dict()
        payload.pop("wall_clock_seconds")
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunReport":
        return cls(**payload)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


@dataclass
class TrainOutcome:
    report: RunReport
    model: SequenceModel
    dataset: DatasetSplits
    evaluation: EvaluationResult
    checkpoint: Optional[Path] = None


def load_series(config: RunConfig) -> List[DailyRecord]:
    if config.data_path:
        return ingest_csv(config.data_path)
    return synthesize_series(config.synth_length, config.data_seed,
                             SynthParams(noise_scale=config.synth_noise_scale))


def train_step(model: SequenceModel, batch: SequenceBatch, weights: LossWeights, state: OptimizerState,
               use_contrastive: bool, rng: np.random.Generator) -> Dict[str, float]:
    """Forward, loss, backward and one Adam update for a single batch."""
    with Tape() as tape:
        result = model.forward(batch.x, train_mode=True, rng=rng)
        components = {"mse": mse_loss(result.prediction, batch.y[:, 0])}
        if result.h_est_steps is not None:
            components["pe"] = pe_loss(result.h_pred_steps, result.h_est_steps)
        if use_contrastive:
            augmented = model.forward(batch.x_aug, train_mode=True, rng=rng)
            components["cl"] = contrastive_loss(result.z, augmented.z, weights)
        loss, report = total_loss(components, weights)
        grads = backward(tape, loss)
    adam_step(model.params, grads, state)
    return report


def train(config: RunConfig, out_dir: Optional[Union[str, Path]] = None,
          series: Optional[Sequence[DailyRecord]] = None) -> TrainOutcome:
    """Trains one model per ``config``; writes the run artifacts when ``out_dir`` is given."""
    started = time.perf_counter()
    series = load_series(config) if series is None else series
    dataset = build_dataset(series, config.split_fraction, config.constants(), config.noise_sigma, config.seed)
    model = SequenceModel(config.model, config.pe, config.architecture(), seed=config.seed)
    weights = config.loss_weights()
    state = OptimizerState.for_params(model.params, **config.optimizer_settings())
    dropout_rng = np.random.default_rng([config.seed, 1])
    out_dir = Path(out_dir) if out_dir is not None else None

    initial = evaluate(model, dataset.test, config.histogram_bins)
    logger.info(f"Epoch 0 test MSE {initial.mse:.6f} for {model!r}")

    history: List[Dict[str, float]] = []
    last_good = model.params.snapshot()
    with TrainingLog(out_dir / "training_log.tsv" if out_dir else None) as training_log:
        for epoch in range(1, config.epochs + 1):
            totals = dict.fromkeys(LOSS_COLUMNS, 0.0)
            batches = 0
            for batch in batch_iterator(dataset.train, config.batch_size, shuffle_seed=config.seed + epoch):
                try:
                    step_report = train_step(model, batch, weights, state, config.scl, dropout_rng)
                except NumericError as exc:
                    model.params.load_arrays(last_good)
                    checkpoint = None
                    if out_dir is not None:
                        checkpoint = save_checkpoint(out_dir / "checkpoint", model, dataset.stats, config.to_dict())
                    logger.error(f"Training diverged in epoch {epoch}: {exc}")
                    raise TrainingDivergedError(
                        f"training diverged in epoch {epoch}: {exc}; last good weights from epoch {epoch - 1}",
                        checkpoint,
                    ) from exc
                for key in LOSS_COLUMNS:
                    totals[key] += step_report[key]
                batches += 1
                logger.debug(f"epoch {epoch} batch {batches}: L_total={step_report['L_total']:.6f}")

            row = {"epoch": epoch, **{key: totals[key] / max(batches, 1) for key in LOSS_COLUMNS}}
            history.append(row)
            training_log.write(row)
            last_good = model.params.snapshot()
            logger.info(
                f"Epoch {epoch}/{config.epochs}: L_total={row['L_total']:.6f} L_MSE={row['L_MSE']:.6f} "
                f"L_PE={row['L_PE']:.6f} L_CL={row['L_CL']:.6f}"
            )

    final = evaluate(model, dataset.test, config.histogram_bins)
    report = RunReport(
        model=config.model,
        split=config.split_fraction,
        scl=config.scl,
        pe=config.pe,
        seed=config.seed,
        cl_variant=config.cl_variant,
        epochs=config.epochs,
        n_train=len(dataset.train),
        n_test=len(dataset.test),
        initial_test_mse=initial.mse,
        test_mse=final.mse,
        test_rmse=final.rmse,
        history=history,
        deviation_summary=final.deviation_summary,
        target_summary=final.target_summary,
        prediction_summary=final.prediction_summary,
        histogram=final.histogram,
        config_hash=config.config_hash(),
        wall_clock_seconds=time.perf_counter() - started,
    )
    logger.info(f"Finished {config.model} (pe={config.pe}, scl={config.scl}, seed={config.seed}): "
                f"test MSE {report.test_mse:.6f}, RMSE {report.test_rmse:.6f}")

    outcome = TrainOutcome(report=report, model=model, dataset=dataset, evaluation=final)
    if out_dir is not None:
        outcome.checkpoint = write_run_artifacts(out_dir, config, outcome)
    return outcome
