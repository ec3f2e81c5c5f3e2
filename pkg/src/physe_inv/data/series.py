"""Daily snow/ice observation series: synthesis, CSV ingestion and CSV writing."""
import csv
import logging
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from ..exceptions import ContractError, IngestionError

logger = logging.getLogger(__name__)

CSV_HEADER = ["date", "rho_s", "sic", "albedo"]
MIN_SERIES_LENGTH = 20


@dataclass(frozen=True)
class DailyRecord:
    date: date
    rho_s: float  # kg/m^3
    sic: float  # fraction
    albedo: float  # fraction


@dataclass(frozen=True)
class SynthParams:
    """Seasonal cycle and AR(1) noise for each synthetic variable.

    Peaks are given as day-of-year; ``noise_scale`` multiplies every noise level.
    """

    start: date = date(1995, 1, 1)
    period_days: float = 365.25
    ar_coefficient: float = 0.8
    noise_scale: float = 1.0
    rho_s_mean: float = 300.0
    rho_s_amplitude: float = 40.0
    rho_s_noise: float = 6.0
    rho_s_peak_day: float = 135.0
    rho_s_bounds: tuple = (50.0, 550.0)
    sic_mean: float = 0.85
    sic_amplitude: float = 0.12
    sic_noise: float = 0.02
    sic_peak_day: float = 75.0
    albedo_mean: float = 0.75
    albedo_amplitude: float = 0.1
    albedo_noise: float = 0.02
    albedo_peak_day: float = 110.0


def _ar1(rng: np.random.Generator, length: int, sigma: float, phi: float) -> np.ndarray:
    noise = np.zeros(length)
    if sigma == 0.0:
        return noise
    shocks = rng.standard_normal(length)
    innovation = sigma * math.sqrt(1.0 - phi * phi)
    noise[0] = sigma * shocks[0]
    for t in range(1, length):
        noise[t] = phi * noise[t - 1] + innovation * shocks[t]
    return noise


def _seasonal(days: np.ndarray, mean: float, amplitude: float, peak_day: float, period: float) -> np.ndarray:
    return mean + amplitude * np.cos(2.0 * np.pi * (days - peak_day) / period)


def synthesize_series(length: int, seed: int, params: SynthParams = SynthParams()) -> List[DailyRecord]:
    """Annual sinusoids plus AR(1) noise, clamped to physical ranges. Deterministic per seed."""
    if length < MIN_SERIES_LENGTH:
        raise ContractError(f"series length must be at least {MIN_SERIES_LENGTH}, got {length}")

    rng = np.random.default_rng(seed)
    start_doy = params.start.timetuple().tm_yday - 1
    days = start_doy + np.arange(length, dtype=np.float64)
    phi, scale = params.ar_coefficient, params.noise_scale

    rho_s = _seasonal(days, params.rho_s_mean, params.rho_s_amplitude, params.rho_s_peak_day, params.period_days)
    rho_s = rho_s + _ar1(rng, length, params.rho_s_noise * scale, phi)
    sic = _seasonal(days, params.sic_mean, params.sic_amplitude, params.sic_peak_day, params.period_days)
    sic = sic + _ar1(rng, length, params.sic_noise * scale, phi)
    albedo = _seasonal(days, params.albedo_mean, params.albedo_amplitude, params.albedo_peak_day, params.period_days)
    albedo = albedo + _ar1(rng, length, params.albedo_noise * scale, phi)

    rho_s = np.clip(rho_s, *params.rho_s_bounds)
    sic = np.clip(sic, 0.0, 1.0)
    albedo = np.clip(albedo, 0.0, 1.0)

    records = [
        DailyRecord(params.start + timedelta(days=t), float(rho_s[t]), float(sic[t]), float(albedo[t]))
        for t in range(length)
    ]
    logger.info(f"Synthesized {length} daily records starting {params.start.isoformat()} (seed {seed})")
    return records


def _parse_float(raw: str, column: str, line: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise IngestionError(f"column '{column}' value {raw!r} is not a number", line) from None
    if not math.isfinite(value):
        raise IngestionError(f"column '{column}' value {raw!r} is not finite", line)
    return value


def ingest_csv(path: Union[str, Path]) -> List[DailyRecord]:
    """Parse a ``date,rho_s,sic,albedo`` file, validating ranges and strict date order."""
    records: List[DailyRecord] = []
    try:
        _read_records(path, records)
    except UnicodeDecodeError as exc:
        raise IngestionError(f"not valid UTF-8 text: {exc.reason}", _undecodable_line(path)) from None

    logger.info(f"Ingested {len(records)} records from {path}")
    return records


def _undecodable_line(path: Union[str, Path]) -> int:
    for line, raw in enumerate(Path(path).read_bytes().splitlines(), start=1):
        try:
            raw.decode("utf-8")
        except UnicodeDecodeError:
            return line
    return 1


def _read_records(path: Union[str, Path], records: List[DailyRecord]) -> None:
    # utf-8-sig also accepts files saved with a byte-order mark
    with open(path, "r", encoding="utf-8-sig", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise IngestionError("file is empty; expected header 'date,rho_s,sic,albedo'", 1)
        header = [column.strip() for column in header]
        if header != CSV_HEADER:
            missing = [column for column in CSV_HEADER if column not in header]
            detail = f"missing column(s) {missing}" if missing else f"got {header}"
            raise IngestionError(f"header must be exactly 'date,rho_s,sic,albedo': {detail}", 1)

        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise IngestionError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line)
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise IngestionError(f"date {row[0]!r} is not ISO-8601 YYYY-MM-DD", line) from None
            rho_s = _parse_float(row[1], "rho_s", line)
            sic = _parse_float(row[2], "sic", line)
            albedo = _parse_float(row[3], "albedo", line)
            if rho_s <= 0.0:
                raise IngestionError(f"row {line - 1}: rho_s {rho_s} must be positive", line)
            if not 0.0 <= sic <= 1.0:
                raise IngestionError(f"row {line - 1}: sic {sic} outside [0, 1]", line)
            if not 0.0 <= albedo <= 1.0:
                raise IngestionError(f"row {line - 1}: albedo {albedo} outside [0, 1]", line)
            if records and day == records[-1].date:
                raise IngestionError(f"duplicate date {day.isoformat()}", line)
            if records and day < records[-1].date:
                raise IngestionError(
                    f"dates out of order: {day.isoformat()} follows {records[-1].date.isoformat()}", line
                )
            records.append(DailyRecord(day, rho_s, sic, albedo))


def write_csv(records: Sequence[DailyRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow([record.date.isoformat(), repr(record.rho_s), repr(record.sic), repr(record.albedo)])
    logger.info(f"Wrote {len(records)} records to {path}")
    return path


def series_arrays(series: Sequence[DailyRecord]) -> Dict[str, np.ndarray]:
    return {
        "rho_s": np.array([r.rho_s for r in series], dtype=np.float64),
        "sic": np.array([r.sic for r in series], dtype=np.float64),
        "albedo": np.array([r.albedo for r in series], dtype=np.float64),
    }
