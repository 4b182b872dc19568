# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Build rideshare matching instances from taxi trip records.

Drivers become offline vertices and requests become online types keyed by
their binned pickup and drop-off locations.
"""

import logging
import warnings
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import (
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
)

from .model import (
    ArrivalModel,
    Edge,
    Instance,
    InstanceError,
    OfflineVertex,
    OnlineType,
    Probability,
    _Model,
)

__all__ = [
    "NYC_HOTSPOTS",
    "TRIP_COLUMNS",
    "IngestConfig",
    "TripRecord",
    "ingest_trips",
    "read_trips_csv",
    "synthesize_trips",
    "write_trips_csv",
]

log = logging.getLogger(__name__)

TRIP_COLUMNS = [
    "driver_id",
    "pickup_lat",
    "pickup_lon",
    "drop_lat",
    "drop_lon",
    "trip_length",
    "timestamp",
]

NYC_HOTSPOTS = [
    (40.754, -73.984),  # midtown
    (40.707, -74.011),  # financial district
    (40.641, -73.778),  # JFK
    (40.776, -73.874),  # LaGuardia
    (40.678, -73.944),  # central Brooklyn
    (40.729, -73.998),  # village
]

ADVANTAGED = "advantaged"
DISADVANTAGED = "disadvantaged"


class TripRecord(_Model):
    driver_id: str
    pickup_lat: float
    pickup_lon: float
    drop_lat: float
    drop_lon: float

    trip_length: NonNegativeFloat
    "Trip distance in miles"

    timestamp: float = 0.0
    "Seconds since the start of the recording period"


class IngestConfig(_Model):
    """Binning, demographics, and utility choices for trip ingestion."""

    lat_range: tuple[float, float] = (40.4, 40.95)
    "Accepted latitudes of both trip endpoints"

    lon_range: tuple[float, float] = (-75.0, -73.0)
    "Accepted longitudes of both trip endpoints"

    grid_step: PositiveFloat = 0.005
    "Bin size in degrees"

    advantaged_fraction: Probability = 0.7
    "Probability that a driver or rider is sampled as advantaged"

    p_advantaged: Probability = 0.6
    "Success probability when both sides are advantaged"

    p_disadvantaged: Probability = 0.3
    "Success probability when both sides are disadvantaged"

    p_mixed: Probability = 0.1
    "Success probability otherwise"

    driver_patience: PositiveInt = 3

    rider_patience_choices: list[PositiveInt] = Field(
        default_factory=lambda: [1, 2], min_length=1
    )
    "Rider patience is drawn uniformly from these"

    utility_scale_shift: Optional[NonNegativeFloat] = None
    "Added to utilities to make them nonnegative; defaults to the max distance"

    vicinity_radius: NonNegativeInt = 4
    "Driver offset from the pickup bin, in grid steps along each axis"

    miles_per_degree_lat: PositiveFloat = 69.0
    miles_per_degree_lon: PositiveFloat = 52.4

    seed: int = 0


def _in_box(rec: TripRecord, cfg: IngestConfig) -> bool:
    (lat0, lat1), (lon0, lon1) = cfg.lat_range, cfg.lon_range
    lats = (rec.pickup_lat, rec.drop_lat)
    lons = (rec.pickup_lon, rec.drop_lon)
    return all(lat0 <= x <= lat1 for x in lats) and all(
        lon0 <= x <= lon1 for x in lons
    )


def _bin(lat: float, lon: float, cfg: IngestConfig) -> tuple[int, int]:
    return (
        int(np.floor((lat - cfg.lat_range[0]) / cfg.grid_step)),
        int(np.floor((lon - cfg.lon_range[0]) / cfg.grid_step)),
    )


def _group(side: str, advantaged: bool) -> str:
    return f"{side}:{ADVANTAGED if advantaged else DISADVANTAGED}"


def ingest_trips(
    records: Sequence[TripRecord],
    cfg: IngestConfig,
    rng: Optional[np.random.Generator] = None,
) -> Instance:
    """Convert trip records into a KIID instance.

    Each request type arrives with probability proportional to its record
    count over a horizon equal to the number of kept records. The driver
    serving an edge is placed uniformly on the grid around the pickup bin,
    and utilities are measured in Manhattan miles.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    kept = [r for r in records if _in_box(r, cfg)]
    dropped = len(records) - len(kept)
    if dropped:
        warnings.warn(
            f"Dropped {dropped} trip records outside the bounding box",
            stacklevel=2,
        )
        log.info("Dropped %d of %d trip records", dropped, len(records))
    if not kept:
        raise InstanceError("no trip records to ingest")

    drivers: dict[str, int] = {}
    types: dict[tuple, list[TripRecord]] = {}
    for rec in kept:
        drivers.setdefault(rec.driver_id, len(drivers))
        key = (
            _bin(rec.pickup_lat, rec.pickup_lon, cfg),
            _bin(rec.drop_lat, rec.drop_lon, cfg),
        )
        types.setdefault(key, []).append(rec)

    T = len(kept)
    driver_adv = rng.random(len(drivers)) < cfg.advantaged_fraction
    rider_adv = rng.random(len(types)) < cfg.advantaged_fraction
    rider_patience = rng.choice(cfg.rider_patience_choices, size=len(types))

    offline = [
        OfflineVertex(
            id=i,
            group=_group("driver", bool(driver_adv[i])),
            patience=cfg.driver_patience,
        )
        for i in range(len(drivers))
    ]
    online = [
        OnlineType(
            id=j,
            group=_group("rider", bool(rider_adv[j])),
            patience=int(rider_patience[j]),
            p=len(recs) / T,
        )
        for j, recs in enumerate(types.values())
    ]
    lengths = np.array(
        [np.mean([r.trip_length for r in recs]) for recs in types.values()]
    )

    # Driver offsets in grid steps, one per (driver, type) pair
    radius = cfg.vicinity_radius
    offsets = rng.integers(
        -radius, radius + 1, size=(len(drivers), len(types), 2)
    )
    dist = cfg.grid_step * (
        np.abs(offsets[..., 0]) * cfg.miles_per_degree_lat
        + np.abs(offsets[..., 1]) * cfg.miles_per_degree_lon
    )
    shift = cfg.utility_scale_shift
    if shift is None:
        shift = float(dist.max())

    def p_success(i, j):
        if driver_adv[i] and rider_adv[j]:
            return cfg.p_advantaged
        if not driver_adv[i] and not rider_adv[j]:
            return cfg.p_disadvantaged
        return cfg.p_mixed

    edges = [
        Edge(
            u=i,
            v=j,
            p_e=p_success(i, j),
            w_op=float(lengths[j]),
            w_off=float(max(0.0, lengths[j] - dist[i, j] + shift)),
            w_on=float(max(0.0, shift - dist[i, j])),
        )
        for i in range(len(drivers))
        for j in range(len(types))
    ]

    groups = [
        _group(side, adv)
        for side in ("driver", "rider")
        for adv in (True, False)
    ]
    log.info(
        "Ingested %d drivers, %d request types over %d rounds",
        len(offline),
        len(online),
        T,
    )
    return Instance(
        horizon=T,
        arrival_model=ArrivalModel.kiid,
        offline=offline,
        online=online,
        edges=edges,
        groups=groups,
        metadata={
            "utility_shift": shift,
            "dropped_records": dropped,
            "seed": cfg.seed,
        },
    )


def synthesize_trips(
    n_drivers: int,
    n_requests: int,
    rng: np.random.Generator,
    hotspots: Sequence[tuple[float, float]] = NYC_HOTSPOTS,
    spread: float = 0.01,
    cfg: Optional[IngestConfig] = None,
) -> list[TripRecord]:
    """Generate clustered trips resembling city taxi traffic.

    Pickups and drop-offs are normally scattered around randomly chosen
    hotspots. The first ``n_drivers`` requests are assigned one per driver so
    that every driver appears; the rest go to random drivers.
    """
    if n_drivers < 1 or n_requests < n_drivers:
        raise ValueError(
            f"need 1 <= n_drivers <= n_requests: {n_drivers}, {n_requests}"
        )
    if cfg is None:
        cfg = IngestConfig()
    centers = np.asarray(hotspots, dtype=float)

    def scatter(n):
        pts = centers[rng.integers(len(centers), size=n)]
        pts = pts + rng.normal(scale=spread, size=(n, 2))
        pts[:, 0] = np.clip(pts[:, 0], *cfg.lat_range)
        pts[:, 1] = np.clip(pts[:, 1], *cfg.lon_range)
        return pts

    pickup = scatter(n_requests)
    drop = scatter(n_requests)
    length = (
        np.abs(pickup[:, 0] - drop[:, 0]) * cfg.miles_per_degree_lat
        + np.abs(pickup[:, 1] - drop[:, 1]) * cfg.miles_per_degree_lon
    )
    extra = rng.integers(n_drivers, size=n_requests - n_drivers)
    owner = np.concatenate([np.arange(n_drivers), extra])
    stamps = np.sort(rng.uniform(0, 24 * 3600, size=n_requests))
    return [
        TripRecord(
            driver_id=f"driver-{owner[k]:03d}",
            pickup_lat=float(pickup[k, 0]),
            pickup_lon=float(pickup[k, 1]),
            drop_lat=float(drop[k, 0]),
            drop_lon=float(drop[k, 1]),
            trip_length=float(length[k]),
            timestamp=float(stamps[k]),
        )
        for k in range(n_requests)
    ]


def read_trips_csv(path: Path) -> list[TripRecord]:
    df = pd.read_csv(
        path, dtype={"driver_id": str}, float_precision="round_trip"
    )
    missing = [c for c in TRIP_COLUMNS if c not in df.columns]
    if missing:
        raise InstanceError(f"{path}: missing trip columns {missing}")
    return [TripRecord(**row) for row in df[TRIP_COLUMNS].to_dict("records")]


def write_trips_csv(records: Sequence[TripRecord], path: Path):
    df = pd.DataFrame([r.model_dump() for r in records], columns=TRIP_COLUMNS)
    df.to_csv(path, index=False)
