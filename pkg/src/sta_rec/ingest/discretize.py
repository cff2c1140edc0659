"""Time and space discretization into spatiotemporal patterns.

Time slots come from one of three schemes (hour-of-day, day-of-week,
weekday/weekend). Regions come either from k-means over the training
coordinates or from an externally supplied key -> region file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import ConfigError, FormatError
from ..seeding import rng_for

TIME_SCHEMES = {"hourly": 24, "day-of-week": 7, "weekday-weekend": 2}


def num_time_slots(scheme: str) -> int:
    try:
        return TIME_SCHEMES[scheme]
    except KeyError:
        raise ConfigError(f"unknown time scheme {scheme!r}; choose from {sorted(TIME_SCHEMES)}") from None


def discretize_time(timestamp: int, scheme: str, utc_offset_hours: int = 0) -> int:
    """Map an epoch timestamp to a slot id under the given scheme.

    Timestamps are read as UTC; ``utc_offset_hours`` shifts them when a
    dataset is known to be recorded in one local zone. Monday is day 0.
    """
    shifted = int(timestamp) + utc_offset_hours * 3600
    dt = datetime.fromtimestamp(shifted, tz=timezone.utc)
    if scheme == "hourly":
        return dt.hour
    if scheme == "day-of-week":
        return dt.weekday()
    if scheme == "weekday-weekend":
        return 1 if dt.weekday() >= 5 else 0
    raise ConfigError(f"unknown time scheme {scheme!r}; choose from {sorted(TIME_SCHEMES)}")


def _kmeans_plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ over (lat, lon) rows."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest_sq = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest_sq.sum()
        if total <= 0.0:
            # all remaining points coincide with a centroid; pick uniformly
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest_sq / total))
        centroids[i] = points[idx]
        closest_sq = np.minimum(closest_sq, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _assign_all(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid id per point; ties broken by the lowest centroid id."""
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)  # argmin returns the first (lowest) index on ties


@dataclass
class KMeansRegions:
    """Fitted region model: k centroids in plain (lat, lon) degree space."""

    centroids: np.ndarray  # (k, 2) float64

    @property
    def num_regions(self) -> int:
        return int(self.centroids.shape[0])

    def assign(self, lat: float, lon: float) -> int:
        d2 = ((self.centroids - np.array([lat, lon], dtype=np.float64)) ** 2).sum(axis=1)
        return int(d2.argmin())

    def assign_many(self, coords: np.ndarray) -> np.ndarray:
        return _assign_all(np.asarray(coords, dtype=np.float64), self.centroids)

    def regions_by_distance(self, lat: float, lon: float) -> np.ndarray:
        """All region ids ordered by centroid distance (ties by lower id)."""
        d2 = ((self.centroids - np.array([lat, lon], dtype=np.float64)) ** 2).sum(axis=1)
        return np.argsort(d2, kind="stable")


def fit_regions(coords: Sequence[tuple[float, float]] | np.ndarray, k: int, seed: int, max_iter: int = 100) -> KMeansRegions:
    """Lloyd's k-means on (lat, lon) with seeded k-means++ initialization.

    Converges when assignments stop changing or after ``max_iter`` rounds.
    Empty clusters are repaired by moving their centroid onto the point
    currently farthest from its own centroid, so the fitted model always has
    exactly k non-empty regions over the training coordinates.
    """
    points = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < k:
        raise ConfigError(f"k-means needs at least k={k} distinct coordinates, got {distinct.shape[0]}")
    rng = rng_for(seed, "kmeans")
    centroids = _kmeans_plusplus_init(points, k, rng)
    assignments = _assign_all(points, centroids)
    for _ in range(max_iter):
        for c in range(k):
            mask = assignments == c
            if mask.any():
                centroids[c] = points[mask].mean(axis=0)
            else:
                d2 = ((points - centroids[assignments]) ** 2).sum(axis=1)
                farthest = int(d2.argmax())
                centroids[c] = points[farthest]
                assignments[farthest] = c
        new_assignments = _assign_all(points, centroids)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    # final repair pass: k-means must leave no region empty on its own data
    for c in range(k):
        if not (assignments == c).any():
            d2 = ((points - centroids[assignments]) ** 2).sum(axis=1)
            farthest = int(d2.argmax())
            centroids[c] = points[farthest]
            assignments = _assign_all(points, centroids)
    return KMeansRegions(centroids=centroids)


def assign_region(coord: tuple[float, float], model: KMeansRegions) -> int:
    """Region id of the nearest centroid (ties to the lowest id)."""
    return model.assign(coord[0], coord[1])


@dataclass
class FileRegions:
    """Region assignment from an external two-column file.

    Keys are POI keys or canonical ``lat,lon`` strings; values are region
    ids. This substitutes for administrative-division lookups we cannot ship.
    """

    mapping: dict[str, int]

    @property
    def num_regions(self) -> int:
        return len(set(self.mapping.values()))

    @staticmethod
    def coord_key(lat: float, lon: float) -> str:
        return f"{float(lat):g},{float(lon):g}"

    def lookup(self, lat: float, lon: float, poi_key: Optional[str] = None) -> Optional[int]:
        if poi_key is not None and poi_key in self.mapping:
            return self.mapping[poi_key]
        return self.mapping.get(self.coord_key(lat, lon))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FileRegions":
        mapping: dict[str, int] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t") if "\t" in line else line.split()
                if len(parts) != 2:
                    raise FormatError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
                mapping[parts[0]] = int(parts[1])
        if not mapping:
            raise FormatError(f"region file {path} is empty")
        return cls(mapping=mapping)


RegionModel = Union[KMeansRegions, FileRegions]


@dataclass
class Discretizer:
    """Fitted spatiotemporal discretizer: time scheme plus region model."""

    time_scheme: str
    regions: RegionModel
    utc_offset_hours: int = 0

    @property
    def num_slots(self) -> int:
        return num_time_slots(self.time_scheme)

    @property
    def num_regions(self) -> int:
        return self.regions.num_regions

    def slot(self, timestamp: int) -> int:
        return discretize_time(timestamp, self.time_scheme, self.utc_offset_hours)

    def region(self, lat: float, lon: float, poi_key: Optional[str] = None) -> int:
        if isinstance(self.regions, KMeansRegions):
            return self.regions.assign(lat, lon)
        found = self.regions.lookup(lat, lon, poi_key)
        if found is None:
            raise KeyError(f"no region for poi={poi_key!r} coord=({lat}, {lon}) in region file")
        return found

    def pattern(self, timestamp: int, lat: float, lon: float, poi_key: Optional[str] = None) -> tuple[int, int]:
        return self.slot(timestamp), self.region(lat, lon, poi_key)

    def to_json(self) -> dict:
        payload: dict = {"time_scheme": self.time_scheme, "utc_offset_hours": self.utc_offset_hours}
        if isinstance(self.regions, KMeansRegions):
            payload["kind"] = "kmeans"
            payload["centroids"] = self.regions.centroids.tolist()
        else:
            payload["kind"] = "file"
            payload["mapping"] = self.regions.mapping
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> "Discretizer":
        if payload["kind"] == "kmeans":
            regions: RegionModel = KMeansRegions(centroids=np.asarray(payload["centroids"], dtype=np.float64))
        else:
            regions = FileRegions(mapping={k: int(v) for k, v in payload["mapping"].items()})
        return cls(
            time_scheme=payload["time_scheme"],
            regions=regions,
            utc_offset_hours=int(payload.get("utc_offset_hours", 0)),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Discretizer":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
