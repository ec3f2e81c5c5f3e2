"""
Checkpoint directory layout.

``manifest.json``::

    {
      "format_version": 1,
      "byte_order": "little",
      "dtype": "float64",
      "model": {"kind": ..., "with_pe": ..., "architecture": {...}},
      "tensors": [{"name": ..., "shape": [...], "offset": n, "count": n}, ...],
      "normalization": {"input": {"mean", "std"}, "target": {"mean", "std"}} or null,
      "config": {...} or null
    }

``weights.bin`` holds every tensor's row-major values back to back as
little-endian float64; ``offset`` and ``count`` are in elements, not bytes.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..data import NormalizationStats
from ..exceptions import DataError
from .network import SequenceModel
from .params import Architecture

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
WEIGHTS_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    model: SequenceModel
    stats: Optional[Tuple[NormalizationStats, NormalizationStats]]
    config: Optional[Dict[str, Any]]
    manifest: Dict[str, Any]


def save_checkpoint(
    path: Union[str, Path],
    model: SequenceModel,
    stats: Optional[Tuple[NormalizationStats, NormalizationStats]] = None,
    config: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    entries, chunks, offset = [], [], 0
    for name, tensor in model.params.items():
        values = np.ascontiguousarray(tensor.data, dtype=WEIGHTS_DTYPE)
        entries.append({"name": name, "shape": list(values.shape), "offset": offset, "count": int(values.size)})
        chunks.append(values.tobytes(order="C"))
        offset += int(values.size)

    manifest = {
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "dtype": "float64",
        "model": {"kind": model.kind, "with_pe": model.with_pe, "architecture": model.arch.to_dict()},
        "tensors": entries,
        "normalization": None if stats is None else {"input": stats[0].to_dict(), "target": stats[1].to_dict()},
        "config": config,
    }
    (path / WEIGHTS_NAME).write_bytes(b"".join(chunks))
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Saved checkpoint with {len(entries)} tensors ({offset} values) to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    manifest_path, weights_path = path / MANIFEST_NAME, path / WEIGHTS_NAME
    if not manifest_path.is_file() or not weights_path.is_file():
        raise DataError(f"No checkpoint found at {path} (expected {MANIFEST_NAME} and {WEIGHTS_NAME})")

    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"Checkpoint manifest {manifest_path} is not valid JSON: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"Unsupported checkpoint format version {manifest.get('format_version')!r}")
    if manifest.get("byte_order") != "little" or manifest.get("dtype") != "float64":
        raise DataError("Checkpoint weights must be little-endian float64")

    spec = manifest["model"]
    model = SequenceModel(spec["kind"], bool(spec["with_pe"]), Architecture.from_dict(spec["architecture"]))
    values = np.fromfile(weights_path, dtype=WEIGHTS_DTYPE)
    expected = sum(entry["count"] for entry in manifest["tensors"])
    if values.size != expected:
        raise DataError(f"{weights_path} holds {values.size} values, manifest lists {expected}")

    arrays = {
        entry["name"]: values[entry["offset"]:entry["offset"] + entry["count"]].reshape(entry["shape"])
        for entry in manifest["tensors"]
    }
    unexpected = sorted(set(arrays) - set(model.params.names()))
    if unexpected:
        raise DataError(f"Checkpoint holds tensors the model does not define: {unexpected}")
    model.params.load_arrays(arrays)

    stats = None
    if manifest.get("normalization"):
        stats = (NormalizationStats.from_dict(manifest["normalization"]["input"]),
                 NormalizationStats.from_dict(manifest["normalization"]["target"]))
    logger.info(f"Loaded {model!r} from {path}")
    return Checkpoint(model=model, stats=stats, config=manifest.get("config"), manifest=manifest)
