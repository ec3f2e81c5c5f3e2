"""Central-difference verification of tape gradients."""
import logging
from typing import Callable, Optional

import numpy as np

from ..exceptions import ContractError, GradientCheckError, NumericError
from .tensor import Tensor, Tape, backward

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-8


def _evaluate(f: Callable[[Tensor], Tensor], data: np.ndarray, coordinate: int) -> float:
    try:
        value = f(Tensor(data, requires_grad=False, name="probe_shifted"))
    except NumericError as exc:
        raise GradientCheckError(f"non-finite intermediate at coordinate {coordinate}: {exc}",
                                 coordinate) from exc
    result = float(np.asarray(value.data).reshape(-1)[0])
    if not np.isfinite(result):
        raise GradientCheckError(f"non-finite function value at coordinate {coordinate}", coordinate)
    return result


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-4,
    max_coordinates: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Max relative error between tape gradients and central differences.

    Error per coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    ``max_coordinates`` probes a seeded random subset instead of every entry.
    """
    if eps <= 0.0:
        raise ContractError(f"eps must be positive, got {eps}")

    probe = Tensor(x.data, requires_grad=True, name="probe")
    with Tape() as tape:
        out = f(probe)
        if out.size != 1:
            raise ContractError(f"finite_difference_check needs a scalar function, got shape {out.shape}")
        analytic = backward(tape, out).of(probe).reshape(-1)

    base = x.data.reshape(-1)
    coordinates = np.arange(base.size)
    if max_coordinates is not None and max_coordinates < base.size:
        coordinates = np.sort(np.random.default_rng(seed).choice(base.size, max_coordinates, replace=False))

    worst = 0.0
    for i in coordinates:
        shifted = base.copy()
        shifted[i] = base[i] + eps
        f_plus = _evaluate(f, shifted.reshape(x.shape), int(i))
        shifted[i] = base[i] - eps
        f_minus = _evaluate(f, shifted.reshape(x.shape), int(i))
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic[i])
        error = abs(a - numeric) / max(RELATIVE_FLOOR, abs(a) + abs(numeric))
        if error > worst:
            worst = error
            logger.debug(f"coordinate {int(i)}: analytic={a:.12g} numeric={numeric:.12g} error={error:.3g}")
    return worst
