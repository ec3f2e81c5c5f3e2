"""Architecture settings, named parameter store and weight initialization."""
import logging
import math
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np

from ..autodiff import Tensor
from ..exceptions import ConfigError, ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

MODEL_KINDS = ("physe-inv", "lstm", "bilstm")
FORGET_GATE_BIAS = 1.0


@dataclass(frozen=True)
class Architecture:
    input_size: int = 1
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    dropout: float = 0.4
    head_hidden: int = 64

    def __post_init__(self):
        for key in ("input_size", "hidden_size", "num_layers", "num_heads", "head_hidden"):
            value = getattr(self, key)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"Configuration error: '{key}' must be a positive integer, got {value!r}")
        if self.hidden_size % self.num_heads:
            raise ConfigError(
                f"Configuration error: 'hidden_size' ({self.hidden_size}) must be divisible by "
                f"'num_heads' ({self.num_heads})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"Configuration error: 'dropout' must lie in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, float]) -> "Architecture":
        return cls(**payload)


class ModelParams:
    """Insertion-ordered map of parameter name to trainable ``Tensor``.

    Optimizer updates write into ``tensor.data`` in place, so the tensors stay
    the same objects (and keep their names) for the life of the model.
    """

    def __init__(self):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ContractError(f"Parameter '{name}' is already defined")
        tensor = Tensor(array, requires_grad=True, name=name)
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ContractError(f"Unknown parameter '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def count(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = [name for name in self._tensors if name not in arrays]
        if missing:
            raise ContractError(f"Missing parameters: {missing}")
        for name, tensor in self._tensors.items():
            array = np.asarray(arrays[name], dtype=np.float64)
            if array.shape != tensor.shape:
                raise DimensionError(f"Parameter '{name}' has shape {tensor.shape}, got {array.shape}")
            tensor.data[...] = array

    @contextmanager
    def substitute(self, name: str, tensor: Tensor) -> Iterator[Tensor]:
        """Temporarily swaps in another tensor under ``name`` (used to probe gradients)."""
        original = self[name]
        if tensor.shape != original.shape:
            raise DimensionError(f"Parameter '{name}' has shape {original.shape}, got {tensor.shape}")
        self._tensors[name] = tensor
        try:
            yield tensor
        finally:
            self._tensors[name] = original

    def check_finite(self) -> None:
        for name, tensor in self._tensors.items():
            if not np.all(np.isfinite(tensor.data)):
                raise NumericError(f"Parameter '{name}' became non-finite")


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_lstm_layer(params: ModelParams, prefix: str, input_size: int, hidden: int,
                   rng: np.random.Generator) -> None:
    """Gate blocks are ordered input, forget, cell, output along the 4H axis."""
    params.add(f"{prefix}.w_ih", _uniform(rng, (input_size, 4 * hidden), input_size))
    params.add(f"{prefix}.w_hh", _uniform(rng, (hidden, 4 * hidden), hidden))
    bias = _uniform(rng, (4 * hidden,), hidden)
    bias[hidden:2 * hidden] = FORGET_GATE_BIAS
    params.add(f"{prefix}.bias", bias)


def add_linear(params: ModelParams, prefix: str, fan_in: int, fan_out: int, rng: np.random.Generator,
               weight: str = "w", bias: str = "b") -> None:
    params.add(f"{prefix}.{weight}", _uniform(rng, (fan_in, fan_out), fan_in))
    params.add(f"{prefix}.{bias}", _uniform(rng, (fan_out,), fan_in))


def init_params(kind: str, with_pe: bool, arch: Architecture, seed: int) -> ModelParams:
    if kind not in MODEL_KINDS:
        raise ConfigError(f"Configuration error: unsupported model kind '{kind}' (choose from {MODEL_KINDS})")

    rng = np.random.default_rng(seed)
    params = ModelParams()
    hidden = arch.hidden_size

    if kind == "bilstm":
        for layer in range(arch.num_layers):
            fan_in = arch.input_size if layer == 0 else 2 * hidden
            for direction in ("fwd", "bwd"):
                add_lstm_layer(params, f"bilstm.l{layer}.{direction}", fan_in, hidden, rng)
        latent = 2 * hidden
    else:
        for layer in range(arch.num_layers):
            add_lstm_layer(params, f"encoder.l{layer}", arch.input_size if layer == 0 else hidden, hidden, rng)
        latent = hidden

    if kind == "physe-inv":
        for proj in ("q", "k", "v", "o"):
            add_linear(params, "attention", hidden, hidden, rng, weight=f"w_{proj}", bias=f"b_{proj}")
        for layer in range(arch.num_layers):
            add_lstm_layer(params, f"decoder.l{layer}", hidden, hidden, rng)

    add_linear(params, "head", latent, 1, rng)

    if with_pe:
        add_linear(params, "inverse", latent, arch.head_hidden, rng, weight="w1", bias="b1")
        add_linear(params, "inverse", arch.head_hidden, arch.head_hidden, rng, weight="w2", bias="b2")
        add_linear(params, "inverse", arch.head_hidden, 3, rng, weight="w3", bias="b3")

    logger.debug(f"Initialized {kind} parameters (pe={with_pe}): {len(params)} tensors, {params.count()} scalars")
    return params
