"""Finite-difference checks for every tape operation and for the composite model."""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, concat, cosine_similarity, dropout, finite_difference_check, op_kinds
from .exceptions import ConfigError, GradientCheckError
from .model import Architecture, SequenceModel
from .objectives import LossWeights, contrastive_loss, mse_loss, pe_loss, total_loss

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-3
DEFAULT_EPS = 1e-4
DEFAULT_SEEDS = 50
COMPOSITE = "composite"
COMPOSITE_COORDINATES = 2
COMPOSITE_SEEDS = 5
# Row softmax is invariant to the key bias, so its gradient is identically zero
ZERO_GRADIENT_PARAMS = ("attention.b_k",)

Case = Tuple[Callable[[Tensor], Tensor], np.ndarray]


def _away_from(rng: np.random.Generator, shape, low: float, high: float) -> np.ndarray:
    """Random signs times magnitudes in [low, high]; keeps samples clear of kinks at zero."""
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, high, size=shape)


def _matmul_case(rng):
    right, left = rng.normal(size=(4, 2)), rng.normal(size=(2, 3))
    w1, w2 = rng.normal(size=(3, 2)), rng.normal(size=(2, 4))
    return lambda x: ((x @ right) * w1).sum() + ((left @ x) * w2).sum(), rng.normal(size=(3, 4))


def _add_case(rng):
    row, w = rng.normal(size=(1, 4)), rng.normal(size=(3, 4))
    return lambda x: ((x + row) * w).sum() + ((row + x[0:1, :]) * w[0:1, :]).sum(), rng.normal(size=(3, 4))


def _sub_case(rng):
    other, w1, w2 = rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    return lambda x: ((x - other) * w1).sum() + ((other - x) * w2 * x).sum(), rng.normal(size=(3, 4))


def _mul_case(rng):
    scale, w = rng.normal(size=(4,)), rng.normal(size=(3, 4))
    return lambda x: (x * x * scale * w).sum(), rng.normal(size=(3, 4))


def _div_case(rng):
    num, den, w = rng.normal(size=(3, 4)), _away_from(rng, (3, 4), 0.5, 2.0), rng.normal(size=(3, 4))
    return lambda x: ((num / x + x / den) * w).sum(), _away_from(rng, (3, 4), 0.5, 2.0)


def _unary_case(method: str, low: float, high: float, positive: bool = False):
    def build(rng):
        x0 = rng.uniform(low, high, size=(3, 4)) if positive else _away_from(rng, (3, 4), low, high)
        w = rng.normal(size=(3, 4))
        return lambda x: (getattr(x, method)() * w).sum(), x0
    return build


def _power_case(rng):
    w = rng.normal(size=(3, 4))
    return lambda x: ((x ** 2.5) * w + (x ** 3) * w).sum(), rng.uniform(0.5, 2.0, size=(3, 4))


def _clip_case(rng):
    inside = rng.uniform(0.1, 0.8, size=(3, 4))
    outside = rng.uniform(1.2, 2.0, size=(3, 4))
    magnitude = np.where(rng.random((3, 4)) < 0.5, inside, outside)
    x0 = rng.choice([-1.0, 1.0], size=(3, 4)) * magnitude
    w = rng.normal(size=(3, 4))
    return lambda x: (x.clip(-1.0, 1.0) * x * w).sum(), x0


def _sum_case(rng):
    w1, w2 = rng.normal(size=(3,)), rng.normal(size=(1, 4))
    return lambda x: ((x * x).sum(axis=1) * w1).sum() + (x.sum(axis=0, keepdims=True) * w2).sum() + x.sum(), \
        rng.normal(size=(3, 4))


def _mean_case(rng):
    w = rng.normal(size=(4,))
    return lambda x: ((x * x).mean(axis=0) * w).sum() + (x * x).mean(), rng.normal(size=(3, 4))


def _concat_case(rng):
    scale, w = rng.normal(size=(3, 4)), rng.normal(size=(3, 8))
    return lambda x: (concat([x, x * scale], axis=1) * w).sum(), rng.normal(size=(3, 4))


def _slice_case(rng):
    w1, w2 = rng.normal(size=(2, 2)), rng.normal(size=(4,))
    return lambda x: (x[1:, ::2] * w1).sum() + (x[0, :] * x[2, :] * w2).sum(), rng.normal(size=(3, 4))


def _transpose_case(rng):
    w = rng.normal(size=(4, 3))
    return lambda x: (x.transpose((1, 0)) * w * x.transpose()).sum(), rng.normal(size=(3, 4))


def _reshape_case(rng):
    w = rng.normal(size=(2, 6))
    return lambda x: (x.reshape((2, 6)) * w * x.reshape((2, 6))).sum(), rng.normal(size=(3, 4))


def _softmax_case(rng):
    w = rng.normal(size=(3, 4))
    return lambda x: (x.row_softmax() * w).sum(), rng.normal(size=(3, 4))


def _dropout_case(rng):
    mask_seed, w = int(rng.integers(1 << 31)), rng.normal(size=(3, 4))
    return lambda x: (dropout(x * x, 0.3, True, np.random.default_rng(mask_seed)) * w).sum(), rng.normal(size=(3, 4))


def _cosine_case(rng):
    other, w1, w2 = rng.normal(size=(3, 4)), rng.normal(size=(3,)), rng.normal(size=(3, 3))

    def f(x):
        pairwise = cosine_similarity(x.reshape((3, 1, 4)), x.reshape((1, 3, 4)))
        return (cosine_similarity(x, other) * w1).sum() + (pairwise * w2).sum()
    return f, rng.normal(size=(3, 4))


OP_CASES: Dict[str, Callable[[np.random.Generator], Case]] = {
    "matmul": _matmul_case,
    "add": _add_case,
    "sub": _sub_case,
    "mul": _mul_case,
    "div": _div_case,
    "sigmoid": _unary_case("sigmoid", 0.05, 3.0),
    "tanh": _unary_case("tanh", 0.05, 2.0),
    "exp": _unary_case("exp", 0.05, 2.0),
    "log": _unary_case("log", 0.5, 3.0, positive=True),
    "power": _power_case,
    "relu": _unary_case("relu", 0.1, 2.0),
    "clip": _clip_case,
    "sum": _sum_case,
    "mean": _mean_case,
    "concat": _concat_case,
    "slice": _slice_case,
    "transpose": _transpose_case,
    "reshape": _reshape_case,
    "row_softmax": _softmax_case,
    "dropout": _dropout_case,
    "cosine_similarity": _cosine_case,
}


@dataclass
class CheckSummary:
    name: str
    max_error: float = 0.0
    worst_seed: int = 0
    checks: int = 0
    failures: List[str] = field(default_factory=list)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_error < self.tolerance


def _record(summary: CheckSummary, seed: int, run: Callable[[], float]) -> None:
    try:
        error = run()
    except GradientCheckError as exc:
        summary.failures.append(f"seed {seed}: {exc}")
        return
    summary.checks += 1
    if error > summary.max_error:
        summary.max_error, summary.worst_seed = error, seed
    if error >= summary.tolerance:
        summary.failures.append(f"seed {seed}: relative error {error:.3e}")


def check_op(name: str, seeds: int = DEFAULT_SEEDS, eps: float = DEFAULT_EPS,
             tolerance: float = DEFAULT_TOLERANCE) -> CheckSummary:
    summary = CheckSummary(name, tolerance=tolerance)
    for seed in range(seeds):
        f, x0 = OP_CASES[name](np.random.default_rng(seed))
        _record(summary, seed, lambda: finite_difference_check(f, Tensor(x0), eps=eps))
    return summary


def composite_loss(model: SequenceModel, x: np.ndarray, x_aug: np.ndarray, y: np.ndarray,
                   weights: LossWeights) -> Tensor:
    """Eval-mode forward of both views through every head and loss."""
    result = model.forward(x)
    augmented = model.forward(x_aug)
    components = {
        "mse": mse_loss(result.prediction, y),
        "pe": pe_loss(result.h_pred_steps, result.h_est_steps),
        "cl": contrastive_loss(result.z, augmented.z, weights),
    }
    loss, _ = total_loss(components, weights)
    return loss


def check_composite(seeds: int = COMPOSITE_SEEDS, eps: float = DEFAULT_EPS,
                    tolerance: float = DEFAULT_TOLERANCE,
                    coordinates: int = COMPOSITE_COORDINATES) -> CheckSummary:
    """Micro model (hidden 8, 4 heads, 2 sequences); sampled coordinates of every parameter tensor."""
    summary = CheckSummary(COMPOSITE, tolerance=tolerance)
    arch = Architecture(hidden_size=8, num_heads=4, num_layers=2, head_hidden=8)
    weights = LossWeights()
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        model = SequenceModel("physe-inv", True, arch, seed=seed)
        x = rng.normal(size=(2, 10, 1))
        x_aug = x + rng.normal(0.0, 0.1, size=x.shape)
        y = rng.normal(size=(2,))
        for name, tensor in model.params.items():
            if name in ZERO_GRADIENT_PARAMS:
                continue

            def f(probe: Tensor, name=name) -> Tensor:
                with model.params.substitute(name, probe):
                    return composite_loss(model, x, x_aug, y, weights)
            _record(summary, seed, lambda: finite_difference_check(
                f, tensor, eps=eps, max_coordinates=coordinates, seed=seed))
    return summary


def available_checks() -> List[str]:
    return sorted(OP_CASES) + [COMPOSITE]


def run_suite(ops: Optional[Sequence[str]] = None, seeds: int = DEFAULT_SEEDS, eps: float = DEFAULT_EPS,
              tolerance: float = DEFAULT_TOLERANCE) -> List[CheckSummary]:
    names = list(ops) if ops else available_checks()
    unknown = [n for n in names if n not in OP_CASES and n != COMPOSITE]
    if unknown:
        raise ConfigError(f"Configuration error: unknown gradient check(s) {unknown}; choose from {available_checks()}")
    uncovered = sorted(set(op_kinds()) - set(OP_CASES))
    if uncovered and not ops:
        logger.warning(f"No gradient check registered for operation(s) {uncovered}")

    summaries = []
    for name in names:
        if name == COMPOSITE:
            summary = check_composite(min(seeds, COMPOSITE_SEEDS), eps, tolerance)
        else:
            summary = check_op(name, seeds, eps, tolerance)
        logger.info(f"gradcheck {name}: max relative error {summary.max_error:.3e} over {summary.checks} check(s)"
                    f" -> {'ok' if summary.passed else 'FAIL'}")
        summaries.append(summary)
    return summaries
