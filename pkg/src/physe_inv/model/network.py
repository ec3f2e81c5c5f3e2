"""
Forward pass of the sequence models.

``physe-inv`` runs an LSTM encoder, multi-head self-attention and an LSTM
decoder; ``lstm`` and ``bilstm`` are the attention-free baselines. All three
share the per-step prediction head and, when parameter estimation is on, the
inverse head whose raw outputs are mapped onto

    alpha in [-1, 1],  beta in (0, inf),  gamma in [-10, 10]

and fed to the physics encoding

    h_est[t] = alpha * mean(h_pred) + beta * h_pred[t] + gamma.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from ..autodiff import Tensor, as_tensor, concat, dropout
from ..exceptions import ConfigError, ContractError, DimensionError
from .params import MODEL_KINDS, Architecture, ModelParams, init_params

logger = logging.getLogger(__name__)

BETA_RAW_LIMIT = 700.0
GAMMA_SCALE = 10.0


@dataclass
class SurjectiveParams:
    """One (alpha, beta, gamma) triple per sequence, each a [B] tensor."""

    alpha: Tensor
    beta: Tensor
    gamma: Tensor
    clamped: int = 0

    def numpy(self) -> np.ndarray:
        return np.stack([self.alpha.data, self.beta.data, self.gamma.data], axis=-1)


@dataclass
class ForwardResult:
    h_pred_steps: Tensor  # [B, T]
    prediction: Tensor  # [B], final step
    z: Tensor  # [B, latent]
    surjective: Optional[SurjectiveParams] = None
    h_est_steps: Optional[Tensor] = None
    attention: Optional[np.ndarray] = None  # [B, heads, T, T]


# --- recurrent layers -----------------------------------------------------

def lstm_layer(x: Tensor, params: ModelParams, prefix: str, reverse: bool = False) -> Tensor:
    """One LSTM pass over [B, T, in] from zero states; returns [B, T, H] in time order."""
    w_ih, w_hh, bias = params[f"{prefix}.w_ih"], params[f"{prefix}.w_hh"], params[f"{prefix}.bias"]
    batch, steps = x.shape[0], x.shape[1]
    hidden = w_hh.shape[0]

    projected = x @ w_ih + bias
    h = Tensor(np.zeros((batch, hidden)), name=f"{prefix}.h0")
    c = Tensor(np.zeros((batch, hidden)), name=f"{prefix}.c0")
    outputs: List[Optional[Tensor]] = [None] * steps

    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        gates = projected[:, t, :] + h @ w_hh
        i = gates[:, 0:hidden].sigmoid()
        f = gates[:, hidden:2 * hidden].sigmoid()
        g = gates[:, 2 * hidden:3 * hidden].tanh()
        o = gates[:, 3 * hidden:4 * hidden].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        outputs[t] = h.reshape((batch, 1, hidden))
    return concat(outputs, axis=1)


def _check_sequence(x: Tensor, width: int, label: str) -> None:
    if x.ndim != 3:
        raise DimensionError(f"{label}: expected [batch, steps, {width}] input, got shape {x.shape}")
    if x.shape[-1] != width:
        raise DimensionError(f"{label}: expected feature size {width}, got {x.shape[-1]}")


def _stacked_lstm(x: Tensor, params: ModelParams, arch: Architecture, prefix: str, train_mode: bool,
                  rng: Optional[np.random.Generator]) -> Tensor:
    out = x
    for layer in range(arch.num_layers):
        if layer > 0:
            out = dropout(out, arch.dropout, train_mode, rng)
        out = lstm_layer(out, params, f"{prefix}.l{layer}")
    return out


def encode(x: Union[Tensor, np.ndarray], params: ModelParams, arch: Architecture, train_mode: bool = False,
           rng: Optional[np.random.Generator] = None) -> Tensor:
    """Per-step encoder hidden states [B, T, H]; dropout only between layers."""
    x = as_tensor(x)
    _check_sequence(x, arch.input_size, "encode")
    return _stacked_lstm(x, params, arch, "encoder", train_mode, rng)


def attend(hidden: Tensor, params: ModelParams, arch: Architecture) -> Tuple[Tensor, np.ndarray]:
    """Scaled dot-product self-attention per head, heads concatenated then projected.

    Returns the refined sequence and the attention weights [B, heads, T, T].
    """
    _check_sequence(hidden, arch.hidden_size, "attend")
    q = hidden @ params["attention.w_q"] + params["attention.b_q"]
    k = hidden @ params["attention.w_k"] + params["attention.b_k"]
    v = hidden @ params["attention.w_v"] + params["attention.b_v"]

    d_k = arch.head_dim
    scale = 1.0 / math.sqrt(d_k)
    heads, weights = [], []
    for head in range(arch.num_heads):
        cols = slice(head * d_k, (head + 1) * d_k)
        scores = (q[:, :, cols] @ k[:, :, cols].transpose((0, 2, 1))) * scale
        attn = scores.row_softmax()
        heads.append(attn @ v[:, :, cols])
        weights.append(attn.data)

    merged = concat(heads, axis=-1) if len(heads) > 1 else heads[0]
    refined = merged @ params["attention.w_o"] + params["attention.b_o"]
    return refined, np.stack(weights, axis=1)


def decode(refined: Tensor, params: ModelParams, arch: Architecture, train_mode: bool = False,
           rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
    """Returns (z, outputs); z is the final decoder step."""
    _check_sequence(refined, arch.hidden_size, "decode")
    outputs = _stacked_lstm(refined, params, arch, "decoder", train_mode, rng)
    return outputs[:, -1, :], outputs


def bilstm_encode(x: Union[Tensor, np.ndarray], params: ModelParams, arch: Architecture, train_mode: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """Returns (outputs [B, T, 2H], z [B, 2H], forward final state, backward final state)."""
    x = as_tensor(x)
    _check_sequence(x, arch.input_size, "bilstm")
    out = x
    for layer in range(arch.num_layers):
        if layer > 0:
            out = dropout(out, arch.dropout, train_mode, rng)
        fwd = lstm_layer(out, params, f"bilstm.l{layer}.fwd")
        bwd = lstm_layer(out, params, f"bilstm.l{layer}.bwd", reverse=True)
        out = concat([fwd, bwd], axis=-1)
    fwd_final, bwd_final = fwd[:, -1, :], bwd[:, 0, :]
    return out, concat([fwd_final, bwd_final], axis=-1), fwd_final, bwd_final


# --- heads ----------------------------------------------------------------

def predict_direct(outputs: Tensor, params: ModelParams) -> Tuple[Tensor, Tensor]:
    """Affine head per step: ([B, T] step predictions, [B] final-step prediction)."""
    batch, steps = outputs.shape[0], outputs.shape[1]
    h_pred = (outputs @ params["head.w"] + params["head.b"]).reshape((batch, steps))
    return h_pred, h_pred[:, -1]


def transform_raw(raw: Tensor) -> SurjectiveParams:
    """Map raw [B, 3] head outputs onto the constrained parameter ranges."""
    if raw.ndim != 2 or raw.shape[-1] != 3:
        raise DimensionError(f"transform_raw: expected [batch, 3] raw outputs, got {raw.shape}")
    beta_raw = raw[:, 1]
    clamped = int(np.count_nonzero(np.abs(beta_raw.data) > BETA_RAW_LIMIT))
    if clamped:
        logger.warning(f"Clamped {clamped} beta_raw value(s) to +/-{BETA_RAW_LIMIT} to keep exp() finite")
    alpha = 2.0 * raw[:, 0].sigmoid() - 1.0
    beta = beta_raw.clip(-BETA_RAW_LIMIT, BETA_RAW_LIMIT).exp()
    gamma = GAMMA_SCALE * raw[:, 2].tanh()
    return SurjectiveParams(alpha=alpha, beta=beta, gamma=gamma, clamped=clamped)


def invert_surjective(alpha, beta, gamma) -> np.ndarray:
    """Raw triples that ``transform_raw`` maps back onto (alpha, beta, gamma); returns [..., 3]."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(np.abs(alpha) >= 1.0):
        raise ContractError("invert_surjective: alpha must lie strictly inside (-1, 1)")
    if np.any(beta <= 0.0):
        raise ContractError("invert_surjective: beta must be positive")
    if np.any(np.abs(gamma) >= GAMMA_SCALE):
        raise ContractError(f"invert_surjective: gamma must lie strictly inside (-{GAMMA_SCALE}, {GAMMA_SCALE})")
    alpha_raw = np.log1p(alpha) - np.log1p(-alpha)
    beta_raw = np.log(beta)
    gamma_raw = np.arctanh(gamma / GAMMA_SCALE)
    return np.stack(np.broadcast_arrays(alpha_raw, beta_raw, gamma_raw), axis=-1)


def estimate_params(z: Tensor, params: ModelParams) -> Tuple[SurjectiveParams, Tensor]:
    """Three-layer ReLU network on the latent state; returns the transformed triple and the raw outputs."""
    hidden = (z @ params["inverse.w1"] + params["inverse.b1"]).relu()
    hidden = (hidden @ params["inverse.w2"] + params["inverse.b2"]).relu()
    raw = hidden @ params["inverse.w3"] + params["inverse.b3"]
    return transform_raw(raw), raw


def physics_encode(h_pred_steps: Tensor, sp: SurjectiveParams) -> Tensor:
    batch = h_pred_steps.shape[0]
    if sp.alpha.shape != (batch,):
        raise DimensionError(f"physics_encode: {batch} sequences but parameters of shape {sp.alpha.shape}")
    column = (batch, 1)
    mean = h_pred_steps.mean(axis=1, keepdims=True)
    return sp.alpha.reshape(column) * mean + sp.beta.reshape(column) * h_pred_steps + sp.gamma.reshape(column)


def baseline_forward(kind: str, x: Union[Tensor, np.ndarray], params: ModelParams, arch: Architecture,
                     with_pe: bool, train_mode: bool = False,
                     rng: Optional[np.random.Generator] = None) -> ForwardResult:
    if kind == "lstm":
        outputs = encode(x, params, arch, train_mode, rng)
        z = outputs[:, -1, :]
    elif kind == "bilstm":
        outputs, z, _, _ = bilstm_encode(x, params, arch, train_mode, rng)
    else:
        raise ConfigError(f"Configuration error: unsupported baseline kind '{kind}'")
    return _attach_heads(outputs, z, params, with_pe)


def _attach_heads(outputs: Tensor, z: Tensor, params: ModelParams, with_pe: bool,
                  attention: Optional[np.ndarray] = None) -> ForwardResult:
    h_pred, final = predict_direct(outputs, params)
    result = ForwardResult(h_pred_steps=h_pred, prediction=final, z=z, attention=attention)
    if with_pe:
        result.surjective, _ = estimate_params(z, params)
        result.h_est_steps = physics_encode(h_pred, result.surjective)
    return result


class SequenceModel:
    """Owns the parameters of one model kind and runs its forward pass."""

    def __init__(self, kind: str = "physe-inv", with_pe: bool = True, arch: Architecture = Architecture(),
                 seed: int = 0):
        if kind not in MODEL_KINDS:
            raise ConfigError(f"Configuration error: unsupported model kind '{kind}' (choose from {MODEL_KINDS})")
        self.kind = kind
        self.with_pe = with_pe
        self.arch = arch
        self.params = init_params(kind, with_pe, arch, seed)

    def __repr__(self) -> str:
        return f"SequenceModel(kind={self.kind!r}, with_pe={self.with_pe}, parameters={self.params.count()})"

    def forward(self, x: Union[Tensor, np.ndarray], train_mode: bool = False,
                rng: Optional[np.random.Generator] = None) -> ForwardResult:
        if self.kind != "physe-inv":
            return baseline_forward(self.kind, x, self.params, self.arch, self.with_pe, train_mode, rng)
        hidden = encode(x, self.params, self.arch, train_mode, rng)
        refined, weights = attend(hidden, self.params, self.arch)
        z, outputs = decode(refined, self.params, self.arch, train_mode, rng)
        return _attach_heads(outputs, z, self.params, self.with_pe, attention=weights)
