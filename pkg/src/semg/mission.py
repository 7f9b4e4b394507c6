"""UAV measurement missions over an SNR grid.

The UAV flies a boustrophedon sweep, sensing the ground-truth SNR (plus
Gaussian noise) at sampled cells.  A total energy budget is split by the
estimation fraction rho: the estimation phase (flight + sensing) consumes
exactly rho * budget, with the sweep truncated at the first step whose
cost would overflow that allocation and any unspent allocation burned as
loiter flight.  The remaining (1 - rho) * budget powers transmission, so
rho = 1 leaves exactly zero transmission energy.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .rf_env import Environment, ground_truth_map

__all__ = [
    "EnergyModel",
    "Trajectory",
    "MeasurementSet",
    "EnergyLedger",
    "plan_lawnmower",
    "execute_mission",
]

# Slack for cumulative-cost comparisons, in joules.
_COST_EPS = 1e-9


@dataclass
class EnergyModel:
    fly_j_per_m: float = 20.0
    sense_j_per_sample: float = 5.0
    tx_power_w: float = 40.0
    total_budget_j: float = 200_000.0

    def validate(self):
        for name in ("fly_j_per_m", "sense_j_per_sample", "tx_power_w", "total_budget_j"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        return self


@dataclass
class Trajectory:
    waypoints: np.ndarray  # (N, 2) int cells as (x, y), consecutive order
    sample_every_cells: int = 1

    def validate(self, width, height):
        if len(self.waypoints) == 0:
            raise ContractViolation("trajectory has no waypoints")
        if self.sample_every_cells < 1:
            raise ConfigurationError("sample_every_cells must be >= 1")
        w = np.asarray(self.waypoints)
        if w[:, 0].min() < 0 or w[:, 0].max() >= width:
            raise ContractViolation("waypoint x outside grid")
        if w[:, 1].min() < 0 or w[:, 1].max() >= height:
            raise ContractViolation("waypoint y outside grid")
        return self


@dataclass
class MeasurementSet:
    mask: np.ndarray    # (H, W) bool
    values: np.ndarray  # (H, W) dB, NaN where unobserved
    order: np.ndarray   # (K, 2) visit order of masked cells as (x, y)

    @property
    def count(self):
        return int(self.mask.sum())


@dataclass
class EnergyLedger:
    flight_j: float
    sensing_j: float
    transmission_j: float


def plan_lawnmower(width, height, row_spacing_cells, sample_every_cells: int = 1) -> Trajectory:
    """Serpentine sweep of every row_spacing_cells-th row starting at (0, 0).

    Even-numbered swept rows run left to right, odd ones right to left, so
    consecutive waypoints are either one cell apart or a vertical row jump.
    """
    if row_spacing_cells < 1 or row_spacing_cells > height:
        raise ConfigurationError(
            f"row spacing {row_spacing_cells} outside [1, {height}]"
        )
    rows = range(0, height, row_spacing_cells)
    waypoints = []
    for i, y in enumerate(rows):
        xs = range(width) if i % 2 == 0 else range(width - 1, -1, -1)
        waypoints.extend((x, y) for x in xs)
    return Trajectory(np.array(waypoints, dtype=np.int64), sample_every_cells)


def execute_mission(env: Environment, traj: Trajectory, em: EnergyModel,
                    est_fraction, meas_noise_sigma_db, rng,
                    noise_field=None):
    """Walk the trajectory until the estimation allocation runs out.

    Each step to the next waypoint is atomic: its flight cost plus the
    sensing cost (when the cell is due for a sample) must fit in what is
    left of rho * budget or the walk stops with that cell unvisited.
    Measurement noise comes from rng draws in visit order, or from
    noise_field (a per-cell (H, W) table) when common random numbers
    across missions are needed.
    """
    cfg = env.config
    if not 0.0 <= est_fraction <= 1.0:
        raise ContractViolation(f"est_fraction {est_fraction} outside [0, 1]")
    if meas_noise_sigma_db < 0:
        raise ContractViolation("meas_noise_sigma_db must be >= 0")
    em.validate()
    traj.validate(cfg.width_cells, cfg.height_cells)

    truth = ground_truth_map(env).values
    h, w = truth.shape
    mask = np.zeros((h, w), dtype=bool)
    values = np.full((h, w), np.nan)
    order = []

    alloc = est_fraction * em.total_budget_j
    used_flight = 0.0
    used_sense = 0.0
    prev = None
    for i, (cx, cy) in enumerate(traj.waypoints):
        step_flight = 0.0
        if prev is not None:
            dist = np.hypot(cx - prev[0], cy - prev[1]) * cfg.cell_size_m
            step_flight = dist * em.fly_j_per_m
        sensing_due = i % traj.sample_every_cells == 0
        step_sense = em.sense_j_per_sample if sensing_due else 0.0
        if used_flight + used_sense + step_flight + step_sense > alloc + _COST_EPS:
            break
        used_flight += step_flight
        used_sense += step_sense
        prev = (cx, cy)
        if sensing_due:
            if noise_field is not None:
                noise = noise_field[cy, cx]
            else:
                noise = rng.normal(0.0, meas_noise_sigma_db) if meas_noise_sigma_db > 0 else 0.0
            if not mask[cy, cx]:
                order.append((cx, cy))
            mask[cy, cx] = True
            values[cy, cx] = truth[cy, cx] + noise

    # The estimation phase owns its full allocation: leftover joules are
    # burned loitering (booked as flight), which pins transmission_j to
    # (1 - rho) * budget and makes rho = 1 leave exactly zero.
    flight_j = used_flight + max(0.0, alloc - used_flight - used_sense)
    transmission_j = em.total_budget_j - alloc
    ledger = EnergyLedger(flight_j, used_sense, transmission_j)

    order_arr = np.array(order, dtype=np.int64).reshape(len(order), 2)
    return MeasurementSet(mask, values, order_arr), ledger
