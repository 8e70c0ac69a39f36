"""Train/test protocol, error metrics, KDE curves and the benchmark driver."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import classical, neural
from .clustering import ClusterParams, Clustering, cluster_dataset
from .core import DEFAULT_PERIOD, Series
from .errors import EmptyInput, InvalidConfig, LengthMismatch, TooShort, WaterBenchError
from .ingest import Dataset, align_groups, stable_seed

TRAIN_RATIO = 0.8
PER_SERIES_METHODS = ("baseline", "sarima", "lstm", "gru")
CLUSTERED_METHODS = ("lstm_clustered", "gru_clustered")
METHODS = PER_SERIES_METHODS + CLUSTERED_METHODS
METRICS = ("mae", "mse", "rmse")
# models per vectorised training batch; fixed so results never depend on worker count
NEURAL_CHUNK = 128
BANDWIDTH_RESOLUTION = 1e-9


@dataclass(frozen=True)
class SplitSeries:
    train: Series
    test: Series


def train_test_split(series: Series, ratio: float = TRAIN_RATIO) -> SplitSeries:
    n = len(series)
    n_train = math.floor(ratio * n)
    if n < 2 or n_train < 1 or n - n_train < 1:
        raise TooShort(f"series {series.id} of length {n} cannot be split at {ratio}")
    return SplitSeries(series.slice(0, n_train), series.slice(n_train))


@dataclass(frozen=True)
class MetricTriple:
    mae: float
    mse: float
    rmse: float


def metrics(forecast, actual) -> MetricTriple:
    f = np.asarray(forecast, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if f.shape != a.shape:
        raise LengthMismatch(f"forecast {f.shape} vs actual {a.shape}")
    if f.size == 0:
        raise EmptyInput("metrics need at least one point")
    err = f - a
    mse = float(np.mean(err ** 2))
    return MetricTriple(float(np.mean(np.abs(err))), mse, math.sqrt(mse))


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def at(self, x: float) -> float:
        return float(np.interp(x, self.grid, self.density))


def silverman_bandwidth(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    sd = float(np.std(v, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(v, [75, 25])
    h = 0.9 * min(sd, (q75 - q25) / 1.34) * n ** (-0.2)
    # A bandwidth the grid cannot resolve next to the data is as useless as 0.
    scale = max(1.0, float(np.max(np.abs(v)))) if n else 1.0
    return h if h > BANDWIDTH_RESOLUTION * scale else 1.0


def kde(values, grid_size: int = 256) -> DensityCurve:
    """Gaussian KDE with Silverman's bandwidth.

    ``grid_size`` is a minimum: heavy-tailed inputs get extra abscissae
    around every sample so the curve still integrates to one.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("kde needs at least one value")
    if not np.all(np.isfinite(v)):
        raise InvalidConfig("kde values must be finite")
    h = silverman_bandwidth(v)
    lo, hi = v.min() - 3 * h, v.max() + 3 * h
    grid = np.linspace(lo, hi, grid_size)
    if (hi - lo) / (grid_size - 1) > h / 4:
        local = (np.unique(v)[:, None] + h * np.linspace(-6, 6, 49)[None, :]).ravel()
        grid = np.unique(np.concatenate([grid, local[(local > lo) & (local < hi)]]))
    density = np.empty_like(grid)
    norm = 1.0 / (v.size * h * math.sqrt(2 * math.pi))
    for start in range(0, grid.size, 2048):
        g = grid[start:start + 2048]
        z = (g[:, None] - v[None, :]) / h
        density[start:start + 2048] = norm * np.exp(-0.5 * z * z).sum(axis=1)
    return DensityCurve(grid, density, h)


@dataclass(frozen=True)
class ReportRow:
    series_id: str
    method: str
    cluster_id: int | None
    metrics: MetricTriple | None
    status: str = "ok"

    def csv_row(self) -> list:
        cid = "" if self.cluster_id is None else str(self.cluster_id)
        if self.metrics is None:
            return [self.series_id, self.method, cid, "", "", "", self.status]
        m = self.metrics
        return [self.series_id, self.method, cid, repr(m.mae), repr(m.mse), repr(m.rmse), self.status]


REPORT_HEADER = ("series_id", "method", "cluster_id", "mae", "mse", "rmse", "status")


@dataclass
class EvalReport:
    rows: list[ReportRow]
    curves: dict[tuple[str, str], DensityCurve] = field(default_factory=dict)

    def ok_rows(self, method: str) -> list[ReportRow]:
        return [r for r in self.rows if r.method == method and r.status == "ok"]

    def values(self, method: str, metric: str) -> np.ndarray:
        return np.array([getattr(r.metrics, metric) for r in self.ok_rows(method)])

    def median(self, method: str, metric: str = "mae") -> float:
        v = self.values(method, metric)
        return float(np.median(v)) if v.size else math.nan

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})

    def summary(self) -> list[dict]:
        out = []
        for method in self.methods():
            rows = [r for r in self.rows if r.method == method]
            ok = [r for r in rows if r.status == "ok"]
            out.append({
                "method": method,
                "n_rows": len(rows),
                "n_ok": len(ok),
                **{f"median_{m}": self.median(method, m) for m in METRICS},
            })
        return out


def density_curves(report: EvalReport, grid_size: int = 256) -> dict[tuple[str, str], DensityCurve]:
    curves = {}
    for method in report.methods():
        for metric in METRICS:
            v = report.values(method, metric)
            if v.size:
                curves[(method, metric)] = kde(v, grid_size)
    return curves


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in report.rows:
            writer.writerow(row.csv_row())


def read_report_csv(path: str | Path) -> EvalReport:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            cid = int(rec["cluster_id"]) if rec["cluster_id"] else None
            m = None
            if rec["status"] == "ok":
                m = MetricTriple(float(rec["mae"]), float(rec["mse"]), float(rec["rmse"]))
            rows.append(ReportRow(rec["series_id"], rec["method"], cid, m, rec["status"]))
    return EvalReport(rows)


def write_density_csv(curve: DensityCurve, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("x", "density"))
        for x, d in zip(curve.grid, curve.density):
            writer.writerow((repr(float(x)), repr(float(d))))


# ---------------------------------------------------------------------------
# benchmark


def _score(series_id, method, forecast, actual, cluster_id=None) -> ReportRow:
    return ReportRow(series_id, method, cluster_id, metrics(forecast, actual))


def _failed(series_id, method, exc, cluster_id=None) -> ReportRow:
    return ReportRow(series_id, method, cluster_id, None, type(exc).__name__)


def _baseline_rows(splits, failures, s):
    rows = []
    for sid, split in splits.items():
        try:
            f = classical.baseline_forecast(split.train, s, len(split.test))
            rows.append(_score(sid, "baseline", f, split.test.array()))
        except WaterBenchError as exc:
            rows.append(_failed(sid, "baseline", exc))
    return rows


def _sarima_chunk(items: list[tuple[str, np.ndarray, np.ndarray]]) -> list[ReportRow]:
    rows = []
    for sid, train, test in items:
        try:
            f = classical.forecast_series(train, len(test))
            rows.append(_score(sid, "sarima", f, test))
        except WaterBenchError as exc:
            rows.append(_failed(sid, "sarima", exc))
    return rows


def _neural_chunk(payload) -> list[ReportRow]:
    """Train one model per job and score every series mapped to it."""
    kind, method, config, epochs, jobs = payload
    models = neural.train_many([(sets, seed) for sets, seed, _, _ in jobs], kind, config, epochs)
    rows = []
    for model, (_, _, targets, cid) in zip(models, jobs):
        if isinstance(model, Exception):
            rows += [_failed(sid, method, model, cid) for sid, _, _ in targets]
            continue
        try:
            preds = neural.predict_many(
                [model] * len(targets), [train for _, train, _ in targets],
                max(len(test) for _, _, test in targets),
            )
        except WaterBenchError as exc:
            rows += [_failed(sid, method, exc, cid) for sid, _, _ in targets]
            continue
        for (sid, _, test), f in zip(targets, preds):
            rows.append(_score(sid, method, f[:len(test)], test, cid))
    return rows


def _run(fn, payloads, workers):
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return [r for chunk in pool.map(fn, payloads) for r in chunk]
    return [r for p in payloads for r in fn(p)]


def _chunks(items, size):
    return [items[i:i + size] for i in range(0, len(items), size)]


def benchmark(
    dataset: Dataset,
    methods: Iterable[str],
    cluster_params: ClusterParams | None = None,
    train_config: neural.TrainConfig | None = None,
    seed: int = 42,
    workers: int = 1,
    s: int = DEFAULT_PERIOD,
    clustering: Clustering | None = None,
) -> EvalReport:
    """Evaluate each method on the 20% test suffix of every eligible series.

    Per-row failures are recorded as report rows; the run itself never
    aborts on a single series.
    """
    methods = list(dict.fromkeys(methods))
    unknown = set(methods) - set(METHODS)
    if unknown or not methods:
        raise InvalidConfig(f"unknown or empty method list: {sorted(unknown) or methods}")
    if not len(dataset):
        raise InvalidConfig("dataset is empty")
    clustered = [m for m in methods if m in CLUSTERED_METHODS]
    if clustered and cluster_params is None and clustering is None:
        raise InvalidConfig("clustered methods need cluster parameters")
    config = train_config or neural.TrainConfig()
    workers = max(1, int(workers))

    splits, failures = {}, {}
    for series in sorted(dataset.series, key=lambda x: x.id):
        try:
            splits[series.id] = train_test_split(series)
        except TooShort as exc:
            failures[series.id] = exc

    rows: list[ReportRow] = []
    for method in methods:
        if method in PER_SERIES_METHODS:
            rows += [_failed(sid, method, exc) for sid, exc in failures.items()]

    if "baseline" in methods:
        rows += _baseline_rows(splits, failures, s)
    if "sarima" in methods:
        items = [(sid, sp.train.array(), sp.test.array()) for sid, sp in splits.items()]
        size = max(1, math.ceil(len(items) / (4 * workers)))
        rows += _run(_sarima_chunk, _chunks(items, size), workers)

    for kind in (neural.LSTM, neural.GRU):
        if kind in methods:
            jobs = [
                ([sp.train], stable_seed(seed, kind, sid), [(sid, sp.train, sp.test.array())], None)
                for sid, sp in splits.items()
            ]
            payloads = [(kind, kind, config, config.epochs, c) for c in _chunks(jobs, NEURAL_CHUNK)]
            rows += _run(_neural_chunk, payloads, workers)

    if clustered:
        if clustering is None:
            clustering, _ = cluster_dataset(align_groups(dataset), cluster_params)
        for method in clustered:
            kind = method.split("_")[0]
            jobs = []
            for cid, members in clustering.clusters().items():
                eligible = [sid for sid in members if sid in splits]
                for sid in members:
                    if sid in failures:
                        rows.append(_failed(sid, method, failures[sid], cid))
                if not eligible:
                    continue
                targets = [(sid, splits[sid].train, splits[sid].test.array()) for sid in eligible]
                jobs.append(([splits[sid].train for sid in eligible],
                             stable_seed(seed, kind, "cluster", cid), targets, cid))
            payloads = [(kind, method, config, config.cluster_epochs, c) for c in _chunks(jobs, NEURAL_CHUNK)]
            rows += _run(_neural_chunk, payloads, workers)

    rows.sort(key=lambda r: (r.method, r.series_id))
    report = EvalReport(rows)
    report.curves = density_curves(report)
    return report


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ForecastRow:
    series_id: str
    method: str
    cluster_id: int | None
    timestamp: object
    value: float


def forecast_dataset(
    dataset: Dataset,
    methods: Iterable[str],
    horizon: int,
    cluster_params: ClusterParams | None = None,
    train_config: neural.TrainConfig | None = None,
    seed: int = 42,
    s: int = DEFAULT_PERIOD,
) -> tuple[list[ForecastRow], list[ReportRow]]:
    """Fit on each full series and forecast ``horizon`` quarters past its end.

    Returns the forecasts and a list of failure rows (status only).
    """
    config = train_config or neural.TrainConfig()
    out: list[ForecastRow] = []
    failed: list[ReportRow] = []
    by_id = {x.id: x for x in sorted(dataset.series, key=lambda x: x.id)}

    def emit(sid, method, values, cid=None):
        end = by_id[sid].end
        for h, v in enumerate(values, start=1):
            out.append(ForecastRow(sid, method, cid, end.shift(h), float(v)))

    methods = list(dict.fromkeys(methods))
    for method in methods:
        if method == "baseline":
            for sid, series in by_id.items():
                try:
                    emit(sid, method, classical.baseline_forecast(series, s, horizon))
                except WaterBenchError as exc:
                    failed.append(_failed(sid, method, exc))
        elif method == "sarima":
            for sid, series in by_id.items():
                try:
                    emit(sid, method, classical.forecast_series(series, horizon))
                except WaterBenchError as exc:
                    failed.append(_failed(sid, method, exc))
        elif method in (neural.LSTM, neural.GRU):
            ids = list(by_id)
            models = neural.train_many(
                [([by_id[sid]], stable_seed(seed, method, sid)) for sid in ids], method, config
            )
            for sid, model in zip(ids, models):
                if isinstance(model, Exception):
                    failed.append(_failed(sid, method, model))
                else:
                    emit(sid, method, neural.predict(model, by_id[sid], horizon))
        elif method in CLUSTERED_METHODS:
            if cluster_params is None:
                raise InvalidConfig("clustered methods need cluster parameters")
            kind = method.split("_")[0]
            clustering, _ = cluster_dataset(align_groups(dataset), cluster_params)
            groups = list(clustering.clusters().items())
            models = neural.train_many(
                [([by_id[sid] for sid in members], stable_seed(seed, kind, "cluster", cid))
                 for cid, members in groups],
                kind, config, config.cluster_epochs,
            )
            for (cid, members), model in zip(groups, models):
                for sid in members:
                    if isinstance(model, Exception):
                        failed.append(_failed(sid, method, model, cid))
                    else:
                        emit(sid, method, neural.predict(model, by_id[sid], horizon), cid)
        else:
            raise InvalidConfig(f"unknown method {method!r}")
    return out, failed
