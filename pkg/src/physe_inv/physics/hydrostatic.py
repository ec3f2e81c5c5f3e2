"""
Hydrostatic balance of a snow-covered sea-ice column.

The weight of the ice and snow column equals the weight of the seawater it
displaces::

    rho_i * h_i + rho_s * h_s = rho_w * h_sub,      h_sub = h_i + h_s - f_b

Solving for the ice thickness gives the forward equation::

    h_i = (h_s * (rho_w - rho_s) - rho_w * f_b) / (rho_i - rho_w)

The training target is the simplified proxy::

    h_i_proxy = (rho_w * C + albedo * rho_s) / (rho_w - rho_i)

Both closed forms are kept with their printed denominators; they carry
opposite signs (rho_i - rho_w versus rho_w - rho_i) and that is left as is.

Notes
-----
``albedo`` here is the snow albedo. It is unrelated to the learned
``alpha_param`` produced by the inverse head in :mod:`physe_inv.model`.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..exceptions import ConfigError, ContractError, SingularDenominatorError, UnattainableTargetError

logger = logging.getLogger(__name__)

NONUNIQUE_TOLERANCE = 1e-6  # m, thickness match
GRID_STEP = 0.01  # m, spacing of the (h_s, f_b) enumeration grid


@dataclass(frozen=True)
class PhysicalConstants:
    """
    Densities treated as constants.

    Parameters
    ----------
    rho_w : float
        Seawater density, kg/m^3.
    rho_i : float
        Sea-ice density, kg/m^3.
    """

    rho_w: float = 1024.0
    rho_i: float = 917.0

    def __post_init__(self):
        if not (np.isfinite(self.rho_w) and np.isfinite(self.rho_i)):
            raise ConfigError("Configuration error: densities must be finite")
        if self.rho_i <= 0:
            raise ConfigError(f"Configuration error: 'rho_i' must be positive, got {self.rho_i}")
        if self.rho_w == self.rho_i:
            raise SingularDenominatorError(f"rho_w equals rho_i ({self.rho_w}); the closed forms are singular")
        if self.rho_w < self.rho_i:
            raise ConfigError(
                f"Configuration error: 'rho_w' ({self.rho_w}) must exceed 'rho_i' ({self.rho_i}) for ice to float"
            )


@dataclass(frozen=True)
class HydrostaticState:
    """Column state in metres (densities in kg/m^3)."""

    h_i: float
    h_s: float
    f_b: float
    h_sub: float
    rho_s: float

    def __post_init__(self):
        for label in ("h_i", "h_s", "h_sub"):
            if getattr(self, label) < 0:
                raise ContractError(f"HydrostaticState: '{label}' must be non-negative, got {getattr(self, label)}")


@dataclass(frozen=True)
class ProxyInputs:
    """Per-step observables feeding the proxy target."""

    sic: float
    albedo: float
    rho_s: float

    def __post_init__(self):
        if not 0.0 <= self.sic <= 1.0:
            raise ContractError(f"ProxyInputs: 'sic' must lie in [0, 1], got {self.sic}")
        if not 0.0 <= self.albedo <= 1.0:
            raise ContractError(f"ProxyInputs: 'albedo' must lie in [0, 1], got {self.albedo}")
        if self.rho_s <= 0:
            raise ContractError(f"ProxyInputs: 'rho_s' must be positive, got {self.rho_s}")


DEFAULT_CONSTANTS = PhysicalConstants()


def _forward_denominator(constants: PhysicalConstants) -> float:
    denominator = constants.rho_i - constants.rho_w
    if denominator == 0:
        raise SingularDenominatorError("rho_i equals rho_w: the forward thickness equation is singular")
    return denominator


def forward_thickness(h_s: float, f_b: float, rho_s: float,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Ice thickness from snow depth and freeboard (the forward equation, as printed)."""
    return (h_s * (constants.rho_w - rho_s) - constants.rho_w * f_b) / _forward_denominator(constants)


def invert_freeboard(h_i: float, h_s: float, rho_s: float,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Freeboard that makes ``forward_thickness`` return ``h_i``."""
    return (h_s * (constants.rho_w - rho_s) - h_i * _forward_denominator(constants)) / constants.rho_w


def submerged_depth(h_i: float, h_s: float, f_b: float) -> float:
    return h_i + h_s - f_b


def balanced_state(h_s: float, f_b: float, rho_s: float,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> HydrostaticState:
    """State whose thickness and submerged depth are derived jointly from (h_s, f_b)."""
    h_i = forward_thickness(h_s, f_b, rho_s, constants)
    return HydrostaticState(h_i=h_i, h_s=h_s, f_b=f_b, h_sub=submerged_depth(h_i, h_s, f_b), rho_s=rho_s)


def hydrostatic_residual(state: HydrostaticState, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Column weight minus displaced-water weight, kg/m^2. Zero at balance."""
    return constants.rho_i * state.h_i + state.rho_s * state.h_s - constants.rho_w * state.h_sub


def _proxy_denominator(constants: PhysicalConstants) -> float:
    denominator = constants.rho_w - constants.rho_i
    if denominator == 0:
        raise SingularDenominatorError("rho_w equals rho_i: the proxy target is singular")
    return denominator


def proxy_target(inputs: ProxyInputs, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Proxy ice thickness in proxy units (normalized downstream, not metres)."""
    return (constants.rho_w * inputs.sic + inputs.albedo * inputs.rho_s) / _proxy_denominator(constants)


def proxy_target_series(sic: Sequence[float], albedo: Sequence[float], rho_s: Sequence[float],
                        constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    sic = np.asarray(sic, dtype=np.float64)
    albedo = np.asarray(albedo, dtype=np.float64)
    rho_s = np.asarray(rho_s, dtype=np.float64)
    return (constants.rho_w * sic + albedo * rho_s) / _proxy_denominator(constants)


def demonstrate_nonuniqueness(
    h_i_target: float,
    rho_s: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    grid: Tuple[int, int] = (100, 100),
    step: float = GRID_STEP,
    tolerance: float = NONUNIQUE_TOLERANCE,
) -> List[Tuple[float, float]]:
    """
    Enumerate (h_s, f_b) pairs on a grid that all produce ``h_i_target``.

    For each snow-depth node the freeboard axis is scanned for the cell whose
    end points bracket the target thickness; the forward equation is affine in
    f_b, so the root inside that cell follows exactly from the inversion.

    Parameters
    ----------
    h_i_target : float
        Ice thickness to reproduce, m.
    rho_s : float
        Snow density used for every pair, kg/m^3.
    grid : tuple of int
        Node counts along h_s and f_b; nodes sit at ``k * step`` from zero.
    tolerance : float
        Maximum thickness mismatch for a pair to be retained, m.

    Returns
    -------
    list of (h_s, f_b)
        Matching pairs in increasing h_s order.

    Raises
    ------
    UnattainableTargetError
        No pair on the grid reproduces the target.
    """
    n_hs, n_fb = grid
    if n_hs < 2 or n_fb < 2:
        raise ContractError(f"grid sizes must be at least 2, got {grid}")

    hs_nodes = np.arange(n_hs) / (1.0 / step)
    fb_nodes = np.arange(n_fb) / (1.0 / step)
    pairs: List[Tuple[float, float]] = []

    for h_s in hs_nodes:
        offsets = np.array([forward_thickness(h_s, f_b, rho_s, constants) for f_b in fb_nodes]) - h_i_target
        on_node = np.flatnonzero(np.abs(offsets) <= tolerance)
        if on_node.size:
            f_b = float(fb_nodes[on_node[0]])
        else:
            crossings = np.flatnonzero(np.sign(offsets[:-1]) * np.sign(offsets[1:]) < 0)
            if not crossings.size:
                continue
            f_b = invert_freeboard(h_i_target, h_s, rho_s, constants)
            if not fb_nodes[crossings[0]] <= f_b <= fb_nodes[crossings[0] + 1]:
                continue
        if abs(forward_thickness(h_s, f_b, rho_s, constants) - h_i_target) <= tolerance:
            pairs.append((float(h_s), float(f_b)))

    if not pairs:
        raise UnattainableTargetError(
            f"Target thickness {h_i_target} m is not attainable on a {n_hs}x{n_fb} grid with step {step} m"
        )
    logger.info(f"Found {len(pairs)} (h_s, f_b) pairs reproducing h_i={h_i_target}")
    return pairs


PARAMETER_TABLE = (
    ("Known", "Snow albedo", "albedo", "Time series"),
    ("Known", "Snow density", "rho_s", "Time series"),
    ("Known", "Sea ice concentration", "C (sic)", "Time series"),
    ("Known", "Seawater density", "rho_w", "Constant"),
    ("Known", "Sea ice density", "rho_i", "Constant"),
    ("Unknown", "Ice thickness", "h_i", "Time series"),
    ("Unknown", "Ice freeboard", "f_b", "Time series"),
    ("Unknown", "Snow depth", "h_s", "Time series"),
)


def parameter_table() -> List[Tuple[str, str, str, str]]:
    """(category, parameter, notation, type) rows for the column variables."""
    return list(PARAMETER_TABLE)
