"""Dataset loading, alignment grouping and the synthetic generator."""

from __future__ import annotations

import csv
import hashlib
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import AlignedGroup, Series, Timestamp, month_pattern, validate_series
from .errors import DuplicateObservation, InvalidConfig, MalformedRow, ValidationError

CSV_HEADER = ("series_id", "region_id", "year", "month", "consumption_m3")


@dataclass(frozen=True)
class Dataset:
    series: tuple[Series, ...]
    provenance: str = "loaded"
    # latent archetype index per series id; only synthetic data carries it
    archetypes: Mapping[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ids = [s.id for s in self.series]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("series ids in a dataset must be unique")

    def __len__(self) -> int:
        return len(self.series)

    def by_id(self) -> dict[str, Series]:
        return {s.id: s for s in self.series}


def parse_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    rows: dict[str, dict[Timestamp, float]] = {}
    regions: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise MalformedRow(f"{path}: header must be {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise MalformedRow(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            sid, region, year, month, value = (c.strip() for c in row)
            try:
                ts = Timestamp(int(year), int(month))
                val = float(value)
            except (ValueError, ValidationError) as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from None
            if not sid:
                raise MalformedRow(f"{path}:{lineno}: empty series_id")
            if regions.setdefault(sid, region) != region:
                raise MalformedRow(
                    f"{path}:{lineno}: series {sid} listed under regions "
                    f"{regions[sid]} and {region}"
                )
            obs = rows.setdefault(sid, {})
            if ts in obs:
                raise DuplicateObservation(f"{path}:{lineno}: {sid} at {ts} repeated")
            obs[ts] = val
    series = tuple(
        validate_series(sid, regions[sid], obs.items()) for sid, obs in rows.items()
    )
    return Dataset(series, provenance="loaded")


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in dataset.series:
            for ts, v in s.observations:
                writer.writerow([s.id, s.region_id, ts.year, ts.month, repr(v)])


def align_groups(dataset: Dataset) -> list[AlignedGroup]:
    """Partition series by (region, month pattern).

    Groups and their members come out sorted, so downstream labeling
    does not depend on file order.
    """
    buckets: dict[tuple, list[Series]] = defaultdict(list)
    for s in dataset.series:
        buckets[(s.region_id, month_pattern(s))].append(s)
    groups = []
    for (region, pattern) in sorted(buckets, key=lambda k: (k[0], k[1].months)):
        members = sorted(buckets[(region, pattern)], key=lambda s: s.id)
        groups.append(AlignedGroup(region, pattern, tuple(members)))
    return groups


@dataclass(frozen=True)
class SynthConfig:
    n_series: int = 1000
    n_regions: int = 2
    years: tuple[int, int] = (2013, 2019)
    n_month_patterns: int = 3
    base_level_range: tuple[float, float] = (2.0, 40.0)
    seasonal_amplitude_range: tuple[float, float] = (5.0, 30.0)
    trend_slope_range: tuple[float, float] = (-0.2, 0.2)
    noise_sd: float = 0.8
    n_archetypes: int = 5
    max_aggregation: int = 5
    period: int = 4
    seed: int = 42

    def validate(self) -> None:
        problems = []
        for name in ("n_series", "n_regions", "n_archetypes", "max_aggregation"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if not 1 <= self.n_month_patterns <= 3:
            problems.append("n_month_patterns must be in 1..3")
        if self.years[0] > self.years[1]:
            problems.append("years must be (first, last) with first <= last")
        for name in ("base_level_range", "seasonal_amplitude_range", "trend_slope_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                problems.append(f"{name}: low > high")
        if self.noise_sd < 0:
            problems.append("noise_sd must be >= 0")
        if self.n_archetypes > self.n_series:
            problems.append("n_archetypes must not exceed n_series")
        if self.period != 4:
            problems.append("quarterly data needs period 4")
        if problems:
            raise InvalidConfig("; ".join(problems))

    @classmethod
    def from_mapping(cls, data: Mapping) -> SynthConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"unknown synth keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("years", "base_level_range", "seasonal_amplitude_range", "trend_slope_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def _aggregation_weights(max_aggregation: int) -> np.ndarray:
    # single-dwelling meters dominate; weight 1/k for a k-user aggregate
    w = 1.0 / np.arange(1, max_aggregation + 1)
    return w / w.sum()


def _archetypes(config: SynthConfig, rng: np.random.Generator):
    s = config.period
    level = rng.uniform(*config.base_level_range, size=config.n_archetypes)
    amplitude = rng.uniform(*config.seasonal_amplitude_range, size=config.n_archetypes)
    slope = rng.uniform(*config.trend_slope_range, size=config.n_archetypes)
    multipliers = rng.uniform(0.5, 1.5, size=(config.n_archetypes, s))
    multipliers /= multipliers.mean(axis=1, keepdims=True)
    deviation = multipliers - 1.0
    scale = np.abs(deviation).max(axis=1, keepdims=True)
    shape = np.divide(deviation, scale, out=np.zeros_like(deviation), where=scale > 0)
    return level, amplitude, slope, shape


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Draw a dataset of misaligned, aggregated, sparse quarterly series.

    Randomness for series ``i`` comes only from ``(seed, i)``, so the output
    does not depend on generation order.
    """
    config.validate()
    root = np.random.SeedSequence(config.seed)
    arche_rng = np.random.default_rng(root.spawn(1)[0])
    level, amplitude, slope, shape = _archetypes(config, arche_rng)
    weights = _aggregation_weights(config.max_aggregation)

    first_year, last_year = config.years
    n_quarters = 4 * (last_year - first_year + 1)
    t = np.arange(n_quarters)
    series, archetype_of = [], {}
    for i in range(config.n_series):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, i)))
        a = int(rng.integers(config.n_archetypes))
        region = int(rng.integers(config.n_regions))
        offset = int(rng.integers(config.n_month_patterns))
        factor = int(rng.choice(config.max_aggregation, p=weights)) + 1
        # a k-user aggregate sums k independent per-user noise terms
        noise = rng.standard_normal(n_quarters) * config.noise_sd * np.sqrt(factor)

        months = (np.arange(n_quarters) * 3 + offset) % 12 + 1
        phase = (months - 1) // 3
        base = level[a] + slope[a] * t + amplitude[a] * shape[a, phase]
        values = np.clip(factor * base + noise, 0.0, None)

        sid = f"S{i:06d}"
        start = Timestamp(first_year, 1 + offset)
        stamps = [start.shift(q) for q in range(n_quarters)]
        series.append(validate_series(sid, f"R{region:02d}", zip(stamps, values.tolist())))
        archetype_of[sid] = a
    return Dataset(tuple(series), provenance=f"synthetic({config.seed})", archetypes=archetype_of)


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary string-able parts."""
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big") >> 1
