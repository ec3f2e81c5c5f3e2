"""Training losses and their weighted combination."""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import Tensor, as_tensor, concat, cosine_similarity
from ..exceptions import ConfigError, ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

CL_VARIANTS = ("nt_xent", "stability")
REPORT_KEYS = {"mse": "L_MSE", "pe": "L_PE", "cl": "L_CL"}


@dataclass(frozen=True)
class LossWeights:
    lambda_pe: float = 1.0
    lambda_cl: float = 0.5
    tau: float = 0.5
    cl_variant: str = "nt_xent"

    def __post_init__(self):
        if self.lambda_pe < 0:
            raise ConfigError(f"Configuration error: 'lambda_pe' must be non-negative, got {self.lambda_pe}")
        if self.lambda_cl < 0:
            raise ConfigError(f"Configuration error: 'lambda_cl' must be non-negative, got {self.lambda_cl}")
        if self.tau <= 0:
            raise ConfigError(f"Configuration error: 'tau' must be positive, got {self.tau}")
        if self.cl_variant not in CL_VARIANTS:
            raise ConfigError(f"Configuration error: 'cl_variant' must be one of {CL_VARIANTS}, got {self.cl_variant!r}")


def _same_shape(label: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{label}: shapes {a.shape} and {b.shape} differ")


def mse_loss(pred: Union[Tensor, np.ndarray], target: Union[Tensor, np.ndarray]) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.size == 0:
        raise ContractError("mse_loss: empty batch")
    _same_shape("mse_loss", pred, target)
    diff = pred - target
    return (diff * diff).mean()


def pe_loss(h_pred_steps: Tensor, h_est_steps: Tensor) -> Tensor:
    """Per-sequence mean squared reconstruction gap, averaged over the batch."""
    _same_shape("pe_loss", h_pred_steps, h_est_steps)
    if h_pred_steps.ndim != 2:
        raise DimensionError(f"pe_loss: expected [batch, steps], got {h_pred_steps.shape}")
    gap = h_pred_steps - h_est_steps
    return (gap * gap).mean(axis=1).mean()


def _check_pairing(pairing: np.ndarray, n: int) -> None:
    if pairing.shape != (n,):
        raise ContractError(f"nt_xent_loss: pairing must list one partner for each of {n} embeddings")
    if np.any(pairing < 0) or np.any(pairing >= n):
        raise ContractError("nt_xent_loss: pairing index out of range")
    if np.any(pairing == np.arange(n)) or np.any(pairing[pairing] != np.arange(n)):
        raise ContractError("nt_xent_loss: pairing is not a perfect matching of views")


def nt_xent_loss(z_all: Tensor, pairing: Sequence[int], tau: float) -> Tensor:
    """
    Normalized temperature-scaled cross entropy over 2M embeddings.

    Each row i is scored against its partner ``pairing[i]`` relative to every
    other row (k != i) using cosine similarity divided by ``tau``.

    Parameters
    ----------
    z_all : Tensor
        [2M, d] embeddings holding both views.
    pairing : sequence of int
        ``pairing[i]`` is the index of the other view of row i.
    tau : float
        Temperature, positive.
    """
    if tau <= 0:
        raise ContractError(f"nt_xent_loss: tau must be positive, got {tau}")
    if z_all.ndim != 2 or z_all.shape[0] < 2:
        raise ContractError(f"nt_xent_loss: need at least 2 embeddings of shape [n, d], got {z_all.shape}")
    n, d = z_all.shape
    pairing = np.asarray(pairing, dtype=np.int64)
    _check_pairing(pairing, n)

    sim = cosine_similarity(z_all.reshape((n, 1, d)), z_all.reshape((1, n, d)))  # [n, n]
    logits = sim * (1.0 / tau)
    positive = np.zeros((n, n))
    positive[np.arange(n), pairing] = 1.0
    others = 1.0 - np.eye(n)

    # log-sum-exp over k != i, shifted by that row's own maximum so the largest term is exp(0)
    row_max = np.where(others > 0.0, logits.data, -np.inf).max(axis=1, keepdims=True)
    shifted = (logits - row_max) * others
    log_denominator = ((shifted.exp() * others).sum(axis=1)).log()
    return (log_denominator - (shifted * positive).sum(axis=1)).mean()


def stability_regularizer(z: Tensor, z_aug: Tensor) -> Tensor:
    """Mean of 1 - cos(z_i, z_aug_i); no negatives."""
    _same_shape("stability_regularizer", z, z_aug)
    return (1.0 - cosine_similarity(z, z_aug)).mean()


def contrastive_loss(z: Tensor, z_aug: Tensor, weights: LossWeights) -> Tensor:
    if weights.cl_variant == "stability":
        return stability_regularizer(z, z_aug)
    _same_shape("contrastive_loss", z, z_aug)
    m = z.shape[0]
    pairing = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
    return nt_xent_loss(concat([z, z_aug], axis=0), pairing, weights.tau)


def total_loss(components: Dict[str, Optional[Tensor]], weights: LossWeights) -> Tuple[Tensor, Dict[str, float]]:
    """L_MSE + lambda_pe * L_PE + lambda_cl * L_CL; absent components count as zero.

    The report holds every component unweighted plus ``L_total``.
    """
    unknown = sorted(set(components) - set(REPORT_KEYS))
    if unknown:
        raise ContractError(f"total_loss: unknown component(s) {unknown}")
    if components.get("mse") is None:
        raise ContractError("total_loss: the 'mse' component is required")

    report = {}
    for key, label in REPORT_KEYS.items():
        component = components.get(key)
        if component is None:
            report[label] = 0.0
            continue
        if component.size != 1:
            raise ContractError(f"total_loss: component '{label}' must be scalar, got shape {component.shape}")
        value = component.item()
        if not np.isfinite(value):
            raise NumericError(f"Loss component '{label}' is non-finite ({value})")
        report[label] = value

    total = components["mse"]
    for key, weight in (("pe", weights.lambda_pe), ("cl", weights.lambda_cl)):
        if components.get(key) is not None and weight != 0.0:
            total = total + weight * components[key]
    report["L_total"] = total.item()
    return total, report
