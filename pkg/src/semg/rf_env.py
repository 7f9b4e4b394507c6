"""Synthetic RF environments and ground-truth SNR maps.

A scene is a rectangular grid of square cells with a handful of fixed
transmitters.  Received power per cell follows a log-distance path-loss
model plus spatially correlated log-normal shadowing; powers from all
transmitters add in the linear (mW) domain and the per-cell SNR in dB is
clamped to a configured range.  Maps normalize affinely to [-1, 1] for
consumption by the diffusion estimator.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, ContractViolation
from .rng import stream

__all__ = [
    "EnvConfig",
    "Transmitter",
    "Environment",
    "SnrMap",
    "build_environment",
    "path_loss_db",
    "ground_truth_map",
    "to_unit",
    "from_unit",
]


@dataclass
class EnvConfig:
    width_cells: int = 32
    height_cells: int = 32
    cell_size_m: float = 10.0
    n_transmitters: int = 3
    tx_power_dbm: float = 30.0
    path_loss_exponent: float = 3.0
    ref_loss_db: float = 40.0
    ref_distance_m: float = 1.0
    shadowing_sigma_db: float = 6.0
    shadowing_corr_cells: float = 3.0
    noise_floor_dbm: float = -100.0
    snr_clamp: tuple = (-20.0, 60.0)
    seed: int = 0

    def validate(self):
        if self.width_cells <= 0 or self.height_cells <= 0:
            raise ConfigurationError("grid dimensions must be positive")
        if self.cell_size_m <= 0:
            raise ConfigurationError("cell_size_m must be > 0")
        if self.n_transmitters <= 0:
            raise ConfigurationError("n_transmitters must be >= 1")
        if self.path_loss_exponent <= 0:
            raise ConfigurationError("path_loss_exponent must be > 0")
        if self.ref_distance_m <= 0:
            raise ConfigurationError("ref_distance_m must be > 0")
        if self.shadowing_sigma_db < 0 or self.shadowing_corr_cells < 0:
            raise ConfigurationError("shadowing parameters must be >= 0")
        lo, hi = self.snr_clamp
        if not lo < hi:
            raise ConfigurationError("snr_clamp must satisfy lo < hi")
        return self


@dataclass
class Transmitter:
    x_m: float
    y_m: float
    power_dbm: float


@dataclass
class Environment:
    config: EnvConfig
    transmitters: list
    shadow_db: np.ndarray  # (H, W), dB offset added to every received power


@dataclass
class SnrMap:
    width: int
    height: int
    cell_size_m: float
    values: np.ndarray  # (H, W) dB, row-major, values[y, x]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.height, self.width):
            raise ContractViolation(
                f"values shape {self.values.shape} does not match "
                f"{self.height}x{self.width} grid"
            )


def path_loss_db(distance_m, config: EnvConfig):
    """Log-distance path loss; distances inside the reference distance are
    clamped to it so the model never amplifies."""
    d = np.maximum(np.asarray(distance_m, dtype=np.float64), config.ref_distance_m)
    return config.ref_loss_db + 10.0 * config.path_loss_exponent * np.log10(
        d / config.ref_distance_m
    )


def _correlated_shadow(config: EnvConfig, rng) -> np.ndarray:
    h, w = config.height_cells, config.width_cells
    white = rng.standard_normal((h, w))
    sigma = config.shadowing_sigma_db
    if sigma == 0.0:
        return np.zeros((h, w))
    corr = config.shadowing_corr_cells
    if corr == 0.0:
        return sigma * white
    smooth = ndimage.gaussian_filter(white, sigma=corr, mode="wrap")
    # Normalized kernel shrinks the variance; rescale so every cell keeps a
    # std of exactly sigma.  The wrap boundary makes the kernel energy
    # identical for all cells, so one impulse response gives the factor.
    impulse = np.zeros((h, w))
    impulse[0, 0] = 1.0
    response = ndimage.gaussian_filter(impulse, sigma=corr, mode="wrap")
    gain = np.sqrt(np.sum(response**2))
    return smooth * (sigma / gain)


def build_environment(config: EnvConfig) -> Environment:
    """Draw transmitter positions and the shadowing field for config.seed."""
    config.validate()
    tx_rng = stream(config.seed, "tx")
    extent = np.array(
        [config.width_cells * config.cell_size_m, config.height_cells * config.cell_size_m]
    )
    pos = tx_rng.uniform(size=(config.n_transmitters, 2)) * extent
    txs = [Transmitter(float(x), float(y), config.tx_power_dbm) for x, y in pos]
    shadow = _correlated_shadow(config, stream(config.seed, "shadow"))
    return Environment(config, txs, shadow)


def _cell_centers(config: EnvConfig):
    c = config.cell_size_m
    xs = (np.arange(config.width_cells) + 0.5) * c
    ys = (np.arange(config.height_cells) + 0.5) * c
    return np.meshgrid(xs, ys)  # each (H, W)


def _raw_snr_db(env: Environment) -> np.ndarray:
    cfg = env.config
    gx, gy = _cell_centers(cfg)
    total_mw = np.zeros((cfg.height_cells, cfg.width_cells))
    for tx in env.transmitters:
        d = np.hypot(gx - tx.x_m, gy - tx.y_m)
        rx_dbm = tx.power_dbm - path_loss_db(d, cfg) + env.shadow_db
        total_mw += 10.0 ** (rx_dbm / 10.0)
    noise_mw = 10.0 ** (cfg.noise_floor_dbm / 10.0)
    return 10.0 * np.log10(total_mw / noise_mw)


def ground_truth_map(env: Environment) -> SnrMap:
    """Per-cell SNR with all transmitters summed in the mW domain, clamped."""
    cfg = env.config
    lo, hi = cfg.snr_clamp
    values = np.clip(_raw_snr_db(env), lo, hi)
    return SnrMap(cfg.width_cells, cfg.height_cells, cfg.cell_size_m, values)


def to_unit(snr_map: SnrMap, config: EnvConfig) -> np.ndarray:
    """Affine [lo, hi] dB -> [-1, 1]."""
    lo, hi = config.snr_clamp
    return (snr_map.values - lo) / (hi - lo) * 2.0 - 1.0


def from_unit(unit, config: EnvConfig) -> SnrMap:
    """Inverse of to_unit; clamps to [-1, 1] first so dB stays in range."""
    lo, hi = config.snr_clamp
    u = np.clip(np.asarray(unit, dtype=np.float64), -1.0, 1.0)
    values = (u + 1.0) / 2.0 * (hi - lo) + lo
    return SnrMap(config.width_cells, config.height_cells, config.cell_size_m, values)
