import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from .exceptions import ConfigError
from .model import MODEL_KINDS, Architecture
from .objectives import LossWeights
from .physics import PhysicalConstants

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
LOG_FORMATS = ("text", "json")

# Environment variables replace built-in defaults only; files and flags still win.
ENV_OVERRIDES = {
    "PHYSE_INV_SEED": "seed",
    "PHYSE_INV_LOG_LEVEL": "log_level",
    "PHYSE_INV_OUT_DIR": "out_dir",
}


@dataclass(frozen=True)
class RunConfig:
    """Every run setting, flat. Field order is the documented key order."""

    data_path: Optional[str] = None
    synth_length: int = 10958
    data_seed: int = 1
    synth_noise_scale: float = 1.0
    split_fraction: float = 0.8
    noise_sigma: float = 0.1
    model: str = "physe-inv"
    pe: bool = True
    scl: bool = True
    lambda_pe: float = 1.0
    lambda_cl: float = 0.5
    tau: float = 0.5
    cl_variant: str = "nt_xent"
    learning_rate: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 200
    batch_size: int = 16
    seed: int = 7
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    dropout: float = 0.4
    histogram_bins: int = 50
    rho_w: float = 1024.0
    rho_i: float = 917.0
    out_dir: str = "runs"
    log_level: str = "INFO"
    log_file: Optional[str] = None
    log_format: str = "text"
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"Configuration error: 'split_fraction' must lie in (0, 1), got {self.split_fraction}")
        if self.noise_sigma < 0:
            raise ConfigError(f"Configuration error: 'noise_sigma' must be non-negative, got {self.noise_sigma}")
        if self.synth_noise_scale < 0:
            raise ConfigError(
                f"Configuration error: 'synth_noise_scale' must be non-negative, got {self.synth_noise_scale}"
            )
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"Configuration error: 'model' must be one of {MODEL_KINDS}, got {self.model!r}")
        minimums = {"synth_length": 20, "epochs": 0, "batch_size": 1, "histogram_bins": 1, "workers": 1,
                    "seed": 0, "data_seed": 0}
        for key, minimum in minimums.items():
            if getattr(self, key) < minimum:
                raise ConfigError(f"Configuration error: '{key}' must be at least {minimum}, got {getattr(self, key)}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise ConfigError(f"Configuration error: 'log_level' must be one of {LOG_LEVELS}, got {self.log_level!r}")
        if self.log_format not in LOG_FORMATS:
            raise ConfigError(f"Configuration error: 'log_format' must be one of {LOG_FORMATS}, got {self.log_format!r}")
        # the component types carry their own range checks
        self.loss_weights()
        self.architecture()
        self.constants()

    # --- derived settings -------------------------------------------------
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_pe, self.lambda_cl, self.tau, self.cl_variant)

    def architecture(self) -> Architecture:
        return Architecture(hidden_size=self.hidden_size, num_layers=self.num_layers, num_heads=self.num_heads,
                            dropout=self.dropout, head_hidden=self.hidden_size)

    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(rho_w=self.rho_w, rho_i=self.rho_i)

    def optimizer_settings(self) -> Dict[str, float]:
        return {"learning_rate": self.learning_rate, "beta1": self.beta1, "beta2": self.beta2,
                "epsilon": self.adam_epsilon}

    # --- serialization ----------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def replace(self, **changes: Any) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(payload) - set(fields))
        if unknown:
            raise ConfigError(f"Configuration error: unknown key '{unknown[0]}'")
        values = {key: _coerce(key, fields[key].default, value) for key, value in payload.items()}
        return cls(**values)


def _coerce(key: str, default: Any, value: Any) -> Any:
    """Checks ``value`` against the type of the field's default."""
    if value is None:
        if key in ("data_path", "log_file"):
            return None
        raise ConfigError(f"Configuration error: '{key}' must not be null")
    if key in ("data_path", "log_file", "out_dir") or isinstance(default, str):
        if not isinstance(value, (str, os.PathLike)):
            raise ConfigError(f"Configuration error: '{key}' must be a string, got {value!r}")
        return os.fspath(value)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"Configuration error: '{key}' must be true or false, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool):
            raise ConfigError(f"Configuration error: '{key}' must be an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        raise ConfigError(f"Configuration error: '{key}' must be an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, bool):
            raise ConfigError(f"Configuration error: '{key}' must be a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"Configuration error: '{key}' must be a number, got {value!r}") from None
    return value


class ConfigHandler:
    """Layers defaults, environment, config file and command-line overrides into a ``RunConfig``."""

    def __init__(self, config_path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, Any]] = None,
                 environ: Optional[Mapping[str, str]] = None,
                 required: bool = False):
        self.config_path = config_path
        self.environ = os.environ if environ is None else environ
        self.config: Dict[str, Any] = self._load_defaults()
        self._apply_env_overrides()
        self._load_config(required)
        self._apply_overrides(overrides or {})
        self._validate_config()

    def _load_defaults(self) -> Dict[str, Any]:
        return RunConfig().to_dict()

    def _apply_env_overrides(self) -> None:
        for variable, key in ENV_OVERRIDES.items():
            value = self.environ.get(variable)
            if value:
                logger.debug(f"Environment variable {variable} sets '{key}'")
                self.config[key] = value

    def _load_config(self, required: bool) -> None:
        if self.config_path is None:
            return
        path = Path(self.config_path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                if path.suffix.lower() == ".json":
                    loaded_config = json.load(f)
                else:
                    loaded_config = yaml.safe_load(f)
        except FileNotFoundError:
            if required:
                raise ConfigError(f"Configuration error: config file {path} does not exist") from None
            logger.warning(f"Configuration file not found at {path}. Using defaults and environment variables.")
            return
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            logger.error(f"Error parsing configuration file {path}: {e}")
            raise ConfigError(f"Configuration error: invalid config file {path}: {e}") from e

        loaded_config = loaded_config or {}
        if not isinstance(loaded_config, dict):
            raise ConfigError(f"Configuration error: {path} must hold a mapping of keys to values")
        self._merge_configs(loaded_config, str(path))
        logger.info(f"Loaded configuration from {path}")

    def _merge_configs(self, new_config: Mapping[str, Any], source: str) -> None:
        for key, value in new_config.items():
            if key not in self.config:
                raise ConfigError(f"Configuration error: unknown key '{key}' in {source}")
            self.config[key] = value

    def _apply_overrides(self, overrides: Mapping[str, Any]) -> None:
        self._merge_configs({k: v for k, v in overrides.items() if v is not None}, "command-line overrides")

    def _validate_config(self) -> None:
        self._run_config = RunConfig.from_dict(self.config)
        self.config = self._run_config.to_dict()

    def get(self, key: str, default: Any = None) -> Any:
        return self.config.get(key, default)

    def run_config(self) -> RunConfig:
        return self._run_config

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.config)

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self._run_config.to_json(), encoding="utf-8")
        return path
