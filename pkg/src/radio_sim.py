#!/usr/bin/env python3
"""Deterministic urban macro network simulator: per-cell downtilts in, per-cell risk KPIs out.

Radio model
-----------
* Pathloss: log-distance urban macro, ``PL = 128.1 + 37.6 log10(d_km)`` on the 3-D
  UE-to-antenna distance (clamped at 1 m).
* Antenna: parabolic sector pattern, ``min(12 (v/v3dB)^2, SLA_v) + min(12 (h/h3dB)^2, A_max)``.
* Received power: ``tx_power + max_gain - pattern_loss - pathloss``; the serving cell is
  the strongest one. SINR uses wideband powers against a -104 dBm noise floor with
  every cell transmitting.
* Coverage uses indoor RSRP per resource element: serving power minus the penetration
  loss minus ``10 log10(n_subcarriers)``.
* No fading or shadowing; all randomness is UE placement.

KPIs per cell (risk fractions, high is bad):
    cov  = share of attached UEs with RSRP below the coverage threshold
    qual = share of attached UEs with SINR below the quality threshold
    cap  = clamp(attached_load / nominal_capacity, 0, 1), where
           attached_load = n_attached * traffic / n_ues and
           nominal_capacity = 2 * traffic / n_cells
A cell nobody attaches to reports (0, 0, 0).
"""

import logging
import math
from dataclasses import dataclass, fields
from typing import List, Sequence, Tuple

import numpy as np

from config import (
    ANTENNA_HEIGHT_M,
    CARRIER_FREQ_HZ,
    HORIZONTAL_BEAMWIDTH_DEG,
    HORIZONTAL_MAX_ATTENUATION_DB,
    INTER_SITE_DISTANCE_M,
    MAX_ANTENNA_GAIN_DBI,
    MAX_TILT_DEG,
    MIN_TILT_DEG,
    N_BASE_STATIONS,
    N_SUBCARRIERS,
    N_UES,
    NOISE_FLOOR_DBM,
    PENETRATION_LOSS_DB,
    RSRP_COVERAGE_THRESHOLD_DBM,
    SECTORS_PER_STATION,
    SINR_QUALITY_THRESHOLD_DB,
    TRAFFIC_VOLUME_MBPS,
    TX_POWER_DBM,
    UE_HEIGHT_M,
    VERTICAL_BEAMWIDTH_DEG,
    VERTICAL_SIDELOBE_DB,
)
from utils import ConfigError, ContractError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Simulator parameters. Defaults reproduce the 7-site, 21-cell urban macro network."""
    n_base_stations: int = N_BASE_STATIONS
    sectors_per_station: int = SECTORS_PER_STATION
    n_ues: int = N_UES
    carrier_freq_hz: float = CARRIER_FREQ_HZ
    traffic_volume_mbps: float = TRAFFIC_VOLUME_MBPS
    antenna_height_m: float = ANTENNA_HEIGHT_M
    min_tilt_deg: float = MIN_TILT_DEG
    max_tilt_deg: float = MAX_TILT_DEG
    inter_site_distance_m: float = INTER_SITE_DISTANCE_M
    ue_height_m: float = UE_HEIGHT_M
    rsrp_coverage_threshold_dbm: float = RSRP_COVERAGE_THRESHOLD_DBM
    sinr_quality_threshold_db: float = SINR_QUALITY_THRESHOLD_DB
    tx_power_dbm: float = TX_POWER_DBM
    vertical_beamwidth_deg: float = VERTICAL_BEAMWIDTH_DEG
    horizontal_beamwidth_deg: float = HORIZONTAL_BEAMWIDTH_DEG
    max_antenna_gain_dbi: float = MAX_ANTENNA_GAIN_DBI
    vertical_sidelobe_db: float = VERTICAL_SIDELOBE_DB
    horizontal_max_attenuation_db: float = HORIZONTAL_MAX_ATTENUATION_DB
    noise_floor_dbm: float = NOISE_FLOOR_DBM
    penetration_loss_db: float = PENETRATION_LOSS_DB
    n_subcarriers: int = N_SUBCARRIERS
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    seed: int = 0

    @property
    def n_cells(self) -> int:
        return self.n_base_stations * self.sectors_per_station

    def validate(self) -> 'SimConfig':
        """Raise ConfigError naming the first offending field; return self when valid."""
        validations = [
            (self.n_base_stations > 0, 'n_base_stations', 'must be > 0'),
            (self.sectors_per_station > 0, 'sectors_per_station', 'must be > 0'),
            (self.n_ues > 0, 'n_ues', 'must be > 0'),
            (self.n_subcarriers > 0, 'n_subcarriers', 'must be > 0'),
            (self.carrier_freq_hz > 0, 'carrier_freq_hz', 'must be > 0'),
            (self.traffic_volume_mbps > 0, 'traffic_volume_mbps', 'must be > 0'),
            (self.antenna_height_m > 0, 'antenna_height_m', 'must be > 0'),
            (self.inter_site_distance_m > 0, 'inter_site_distance_m', 'must be > 0'),
            (self.ue_height_m >= 0, 'ue_height_m', 'must be >= 0'),
            (self.ue_height_m < self.antenna_height_m, 'ue_height_m', 'must be below antenna_height_m'),
            (0 <= self.min_tilt_deg <= 90, 'min_tilt_deg', 'must lie in [0, 90]'),
            (0 <= self.max_tilt_deg <= 90, 'max_tilt_deg', 'must lie in [0, 90]'),
            (self.min_tilt_deg <= self.max_tilt_deg, 'min_tilt_deg', 'must not exceed max_tilt_deg'),
            (self.vertical_beamwidth_deg > 0, 'vertical_beamwidth_deg', 'must be > 0'),
            (self.horizontal_beamwidth_deg > 0, 'horizontal_beamwidth_deg', 'must be > 0'),
            (self.vertical_sidelobe_db >= 0, 'vertical_sidelobe_db', 'must be >= 0'),
            (self.horizontal_max_attenuation_db >= 0, 'horizontal_max_attenuation_db', 'must be >= 0'),
            (self.penetration_loss_db >= 0, 'penetration_loss_db', 'must be >= 0'),
        ]
        for is_valid, field_name, message in validations:
            if not is_valid:
                raise ConfigError(field_name, message)
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigError(f.name, 'must be finite')
        return self


@dataclass(frozen=True)
class NetworkLayout:
    """Cell sites and UE drop. Arrays are (n, 2) coordinates in metres."""
    cell_positions: np.ndarray
    cell_azimuths_deg: np.ndarray
    ue_positions: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.cell_azimuths_deg)

    def permuted(self, order: Sequence[int]) -> 'NetworkLayout':
        """Relabel cells: new cell j is old cell order[j]."""
        idx = np.asarray(order, dtype=int)
        return NetworkLayout(self.cell_positions[idx], self.cell_azimuths_deg[idx], self.ue_positions)


@dataclass(frozen=True)
class TiltVector:
    tilts_deg: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'tilts_deg', tuple(float(t) for t in self.tilts_deg))

    def __len__(self):
        return len(self.tilts_deg)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tilts_deg, dtype=float)

    def validate(self, config: SimConfig) -> None:
        if len(self.tilts_deg) != config.n_cells:
            raise ContractError(f"expected {config.n_cells} tilts, got {len(self.tilts_deg)}")
        for cell, tilt in enumerate(self.tilts_deg):
            if not (config.min_tilt_deg <= tilt <= config.max_tilt_deg):
                raise DomainError(
                    f"tilt of cell {cell} is {tilt} deg, outside "
                    f"[{config.min_tilt_deg}, {config.max_tilt_deg}]"
                )


@dataclass(frozen=True)
class CellKpis:
    """Per-cell risk KPIs, each a fraction in [0, 1] (high = bad)."""
    cov: float
    cap: float
    qual: float

    def __post_init__(self):
        for name in ('cov', 'cap', 'qual'):
            value = float(getattr(self, name))
            if not (0.0 <= value <= 1.0):
                raise DomainError(f"{name} risk must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.cov, self.cap, self.qual)


@dataclass(frozen=True)
class UeMeasurements:
    """Per-UE view of one network snapshot."""
    serving_cell: np.ndarray
    received_power_dbm: np.ndarray  # (n_ues, n_cells)
    rsrp_dbm: np.ndarray
    sinr_db: np.ndarray


def _hex_site_positions(n_sites: int, spacing: float) -> np.ndarray:
    """Site centres on a hexagonal lattice, filled ring by ring from the origin."""
    radius = 0
    while 1 + 3 * radius * (radius + 1) < n_sites:
        radius += 1

    candidates = []
    for q in range(-radius, radius + 1):
        for r in range(-radius, radius + 1):
            ring = max(abs(q), abs(r), abs(q + r))
            if ring > radius:
                continue
            x = spacing * (q + r / 2.0)
            y = spacing * (math.sqrt(3) / 2.0) * r
            angle = math.atan2(y, x) % (2 * math.pi) if ring else 0.0
            candidates.append((ring, round(angle, 12), x, y))
    candidates.sort()
    return np.array([[x, y] for _, _, x, y in candidates[:n_sites]], dtype=float)


def _inside_hexagon(points: np.ndarray, circumradius: float) -> np.ndarray:
    x = np.abs(points[:, 0])
    y = np.abs(points[:, 1])
    sqrt3 = math.sqrt(3)
    return (y <= sqrt3 / 2 * circumradius) & (sqrt3 * x + y <= sqrt3 * circumradius)


def service_area_radius(config: SimConfig) -> float:
    """Circumradius of the hexagon bounding every site's own hexagonal cell."""
    sites = _hex_site_positions(config.n_base_stations, config.inter_site_distance_m)
    reach = float(np.max(np.hypot(sites[:, 0], sites[:, 1]))) if len(sites) else 0.0
    return reach + config.inter_site_distance_m / math.sqrt(3)


def build_layout(config: SimConfig) -> NetworkLayout:
    """Place sites on a hexagonal grid, sectorise them and drop UEs uniformly.

    Identical ``config.seed`` gives an identical layout; cell geometry never depends on the seed.
    """
    config.validate()
    sites = _hex_site_positions(config.n_base_stations, config.inter_site_distance_m)
    sector_step = 360.0 / config.sectors_per_station

    cell_positions = np.repeat(sites, config.sectors_per_station, axis=0)
    cell_azimuths = np.tile(
        np.arange(config.sectors_per_station, dtype=float) * sector_step, config.n_base_stations
    )

    radius = service_area_radius(config)
    rng = np.random.default_rng(config.seed)
    accepted = np.empty((0, 2))
    while len(accepted) < config.n_ues:
        draw = rng.uniform(
            low=(-radius, -radius * math.sqrt(3) / 2),
            high=(radius, radius * math.sqrt(3) / 2),
            size=(2 * config.n_ues, 2),
        )
        accepted = np.vstack([accepted, draw[_inside_hexagon(draw, radius)]])
    ue_positions = accepted[:config.n_ues]

    logger.debug(f"Built layout: {len(cell_azimuths)} cells, {len(ue_positions)} UEs, "
                 f"service radius {radius:.1f} m")
    return NetworkLayout(cell_positions, cell_azimuths, ue_positions)


def pattern_loss(vertical_off_deg, horizontal_off_deg, config: SimConfig):
    """Parabolic sector antenna attenuation in dB; zero at boresight. Works on scalars and arrays."""
    vertical = np.minimum(
        12.0 * (np.asarray(vertical_off_deg, dtype=float) / config.vertical_beamwidth_deg) ** 2,
        config.vertical_sidelobe_db,
    )
    horizontal = np.minimum(
        12.0 * (np.asarray(horizontal_off_deg, dtype=float) / config.horizontal_beamwidth_deg) ** 2,
        config.horizontal_max_attenuation_db,
    )
    loss = vertical + horizontal
    return float(loss) if np.ndim(loss) == 0 else loss


def pathloss(distance_m, config: SimConfig):
    """Urban macro log-distance pathloss in dB; distances below 1 m are clamped."""
    distance_km = np.maximum(np.asarray(distance_m, dtype=float), 1.0) / 1000.0
    loss = config.pathloss_intercept_db + config.pathloss_slope_db * np.log10(distance_km)
    return float(loss) if np.ndim(loss) == 0 else loss


def _check_inputs(layout: NetworkLayout, tilts: TiltVector, config: SimConfig) -> None:
    if layout.n_cells != config.n_cells or len(layout.cell_positions) != config.n_cells:
        raise ContractError(f"layout has {layout.n_cells} cells, config expects {config.n_cells}")
    tilts.validate(config)


def measure_ues(layout: NetworkLayout, tilts: TiltVector, config: SimConfig) -> UeMeasurements:
    _check_inputs(layout, tilts, config)

    delta = layout.ue_positions[:, None, :] - layout.cell_positions[None, :, :]
    distance_2d = np.hypot(delta[..., 0], delta[..., 1])
    height = config.antenna_height_m - config.ue_height_m
    distance_3d = np.sqrt(distance_2d ** 2 + height ** 2)

    elevation = np.degrees(np.arctan2(height, distance_2d))
    vertical_off = elevation - tilts.as_array()[None, :]

    # bearing clockwise from north, offset wrapped to [-180, 180)
    bearing = np.degrees(np.arctan2(delta[..., 0], delta[..., 1]))
    horizontal_off = (bearing - layout.cell_azimuths_deg[None, :] + 180.0) % 360.0 - 180.0

    received = (config.tx_power_dbm + config.max_antenna_gain_dbi
                - pattern_loss(vertical_off, horizontal_off, config)
                - pathloss(distance_3d, config))
    received = np.atleast_2d(received)

    serving = np.argmax(received, axis=1)
    rows = np.arange(received.shape[0])
    serving_power = received[rows, serving]

    linear = np.power(10.0, received / 10.0)
    signal = linear[rows, serving]
    interference = linear.sum(axis=1) - signal
    noise = 10.0 ** (config.noise_floor_dbm / 10.0)
    sinr_db = 10.0 * np.log10(signal / (interference + noise))

    rsrp = serving_power - config.penetration_loss_db - 10.0 * math.log10(config.n_subcarriers)
    return UeMeasurements(serving, received, rsrp, sinr_db)


def compute_kpis(layout: NetworkLayout, tilts: TiltVector, config: SimConfig) -> List[CellKpis]:
    """Per-cell (cov, cap, qual) risk KPIs for the joint tilt vector.

    Every UE attaches to the cell with the strongest RSRP. cov and qual are the shares of
    a cell's attached UEs below the RSRP and SINR thresholds; cap is its attached offered
    load over nominal capacity. A cell with no attached UE reports zero cov and qual.

    Args:
        layout: Cell and UE positions; must hold config.n_cells cells
        tilts: One tilt per cell, each within [min_tilt_deg, max_tilt_deg]
        config: Radio and threshold settings

    Returns:
        One CellKpis per cell, in cell order, each KPI clamped to [0, 1]

    Raises:
        ContractError: layout and config disagree on the cell count
        DomainError: a tilt is out of range
    """
    measured = measure_ues(layout, tilts, config)
    n_cells = config.n_cells
    n_ues = len(layout.ue_positions)

    attached = np.bincount(measured.serving_cell, minlength=n_cells).astype(float)
    uncovered = np.bincount(
        measured.serving_cell,
        weights=(measured.rsrp_dbm < config.rsrp_coverage_threshold_dbm).astype(float),
        minlength=n_cells,
    )
    poor_quality = np.bincount(
        measured.serving_cell,
        weights=(measured.sinr_db < config.sinr_quality_threshold_db).astype(float),
        minlength=n_cells,
    )

    safe_attached = np.where(attached > 0, attached, 1.0)
    cov = np.where(attached > 0, uncovered / safe_attached, 0.0)
    qual = np.where(attached > 0, poor_quality / safe_attached, 0.0)

    attached_load = attached * config.traffic_volume_mbps / max(n_ues, 1)
    nominal_capacity = 2.0 * config.traffic_volume_mbps / n_cells
    cap = attached_load / nominal_capacity

    cov, cap, qual = (np.clip(v, 0.0, 1.0) for v in (cov, cap, qual))
    return [CellKpis(float(c), float(p), float(q)) for c, p, q in zip(cov, cap, qual)]
