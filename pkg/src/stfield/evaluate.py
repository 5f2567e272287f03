"""Validation metrics, method comparison and synthetic-world generation."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import pdist, squareform

from stfield.errors import DataError
from stfield.geo import GeoPoint, LccParams, ProjPoint
from stfield.ingest import ObservationMatrix, Station, StationTable

DEFAULT_COVERAGE_LEVEL = 0.95


@dataclass(frozen=True)
class PredictionRecord:
    """One site-day prediction with its interval."""

    station_id: str
    time: dt.date
    point: float
    low: float
    high: float

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise DataError(
                f"{self.station_id} {self.time}: interval bounds reversed"
            )


@dataclass(frozen=True)
class MetricsReport:
    """Squared-error and coverage summary of one method's predictions."""

    method_label: str
    mspe_by_station: dict[str, float]
    mspe_by_time: dict[dt.date, float]
    overall_mspe: float
    overall_mspe_se: float
    coverage: float
    level: float
    n_events: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.coverage <= 1.0:
            raise DataError(f"coverage out of [0, 1]: {self.coverage}")
        if self.overall_mspe < 0:
            raise DataError("negative MSPE")


def evaluate(
    records,
    truth: ObservationMatrix,
    level: float = DEFAULT_COVERAGE_LEVEL,
    method_label: str = "method",
) -> MetricsReport:
    """Score predictions against held-out truth.

    Every unmasked cell of ``truth`` must be covered by exactly one
    record; unknown station/date keys or duplicates are errors. The
    overall MSPE standard error is the standard deviation of per-station
    MSPEs divided by sqrt(number of stations).
    """
    col = {sid: j for j, sid in enumerate(truth.station_ids)}
    row = {t: i for i, t in enumerate(truth.times)}
    seen = np.zeros(truth.values.shape, dtype=bool)
    sq_err = np.full(truth.values.shape, np.nan)
    inside = np.zeros(truth.values.shape, dtype=bool)
    for rec in records:
        j = col.get(rec.station_id)
        i = row.get(rec.time)
        if i is None or j is None:
            raise DataError(
                f"prediction for unknown cell ({rec.station_id}, {rec.time})"
            )
        if seen[i, j]:
            raise DataError(
                f"duplicate prediction for ({rec.station_id}, {rec.time})"
            )
        seen[i, j] = True
        if truth.mask[i, j]:
            continue  # nothing to score against
        y = truth.values[i, j]
        sq_err[i, j] = (rec.point - y) ** 2
        inside[i, j] = rec.low <= y <= rec.high

    scored = ~truth.mask
    missing = scored & ~seen
    if missing.any():
        raise DataError(f"{int(missing.sum())} truth cells have no prediction")
    if not scored.any():
        raise DataError("no unmasked truth cells to score")

    per_event = sq_err[scored]
    by_station = {}
    for sid, j in col.items():
        cells = scored[:, j]
        if cells.any():
            by_station[sid] = float(np.mean(sq_err[cells, j]))
    by_time = {}
    for t, i in row.items():
        cells = scored[i, :]
        if cells.any():
            by_time[t] = float(np.mean(sq_err[i, cells]))
    station_mspes = np.array(list(by_station.values()))
    se = (
        float(np.std(station_mspes, ddof=1) / np.sqrt(station_mspes.size))
        if station_mspes.size > 1
        else 0.0
    )
    return MetricsReport(
        method_label=method_label,
        mspe_by_station=by_station,
        mspe_by_time={t: by_time[t] for t in sorted(by_time)},
        overall_mspe=float(per_event.mean()),
        overall_mspe_se=se,
        coverage=float(inside[scored].mean()),
        level=level,
        n_events=int(scored.sum()),
    )


@dataclass(frozen=True)
class ComparisonTable:
    """Coverage / MSPE / MSPE-se rows, one column per method."""

    labels: tuple[str, ...]
    coverage: tuple[float, ...]
    overall_mspe: tuple[float, ...]
    overall_mspe_se: tuple[float, ...]
    best_mspe_label: str

    def to_text(self) -> str:
        width = max(24, *(len(lab) + 2 for lab in self.labels))
        head = "".ljust(24) + "".join(lab.rjust(width) for lab in self.labels)
        rows = [
            ("Coverage", self.coverage),
            ("Overall MSPE", self.overall_mspe),
            ("Overall MSPE std. error", self.overall_mspe_se),
        ]
        lines = [head]
        for name, vals in rows:
            lines.append(
                name.ljust(24) + "".join(f"{v:.3f}".rjust(width) for v in vals)
            )
        lines.append(f"lowest MSPE: {self.best_mspe_label}")
        return "\n".join(lines)

    def to_csv_rows(self):
        yield ["metric", *self.labels]
        yield ["coverage", *[repr(v) for v in self.coverage]]
        yield ["overall_mspe", *[repr(v) for v in self.overall_mspe]]
        yield ["overall_mspe_se", *[repr(v) for v in self.overall_mspe_se]]


def compare_methods(reports) -> ComparisonTable:
    """Side-by-side table of metric reports; flags the minimum-MSPE method."""
    reports = list(reports)
    if len(reports) < 2:
        raise DataError("need at least two reports to compare")
    best = min(reports, key=lambda r: r.overall_mspe)
    return ComparisonTable(
        labels=tuple(r.method_label for r in reports),
        coverage=tuple(r.coverage for r in reports),
        overall_mspe=tuple(r.overall_mspe for r in reports),
        overall_mspe_se=tuple(r.overall_mspe_se for r in reports),
        best_mspe_label=best.method_label,
    )


# ---------------------------------------------------------------------------
# Synthetic worlds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Generator settings for one synthetic world.

    The residual covariance is exponential either in the geographic plane
    or, when ``warp_strength`` is nonzero, in a smoothly warped copy of it
    (tanh stretch, fold-free), which plants the nonstationarity the
    deformation machinery is meant to recover.
    """

    p: int = 30
    g: int = 20
    n: int = 120
    delta: float = 40.0
    c: float = 0.0
    seed: int = 0
    box_km: float = 400.0
    start: dt.date = dt.date(2000, 1, 1)
    sd_range: tuple[float, float] = (0.9, 1.6)
    phi_km: float = 120.0
    nugget_frac: float = 0.05
    warp_strength: float = 0.0
    warp_scale_km: float = 120.0
    trend_coeffs: dict[str, float] = field(default_factory=dict)
    elev_range_m: tuple[float, float] = (0.0, 2000.0)
    layout: str = "uniform"
    cluster_size: int = 4
    cluster_sd_km: float = 28.0

    def __post_init__(self) -> None:
        if not 0 < self.g < self.p:
            raise DataError(f"need 0 < g < p; got g={self.g}, p={self.p}")
        if not self.delta > self.p + 1:
            raise DataError(
                f"delta={self.delta} must exceed p + 1 = {self.p + 1} for a "
                "finite covariance mean"
            )
        if self.layout not in ("uniform", "clustered"):
            raise DataError(f"layout must be uniform or clustered: {self.layout}")


@dataclass(frozen=True)
class SynthWorld:
    """Generated data plus every latent needed to replay the pipeline."""

    cfg: SynthConfig
    stations: StationTable
    obs: ObservationMatrix
    times: tuple[dt.date, ...]
    Z: np.ndarray
    b0: np.ndarray
    f_inv: np.ndarray
    psi_true: np.ndarray
    sigma: np.ndarray
    B: np.ndarray
    coords_true_d: np.ndarray
    gauged_idx: np.ndarray
    ungauged_idx: np.ndarray
    split_train_ids: tuple[str, ...]
    split_valid_ids: tuple[str, ...]


def planted_warp(coords: np.ndarray, strength: float, scale_km: float) -> np.ndarray:
    """Fold-free tanh stretch of both axes around the centroid."""
    c = coords.mean(axis=0)
    x = coords - c
    return c + x + strength * scale_km * np.tanh(x / scale_km)


def _month_design(times) -> tuple[np.ndarray, tuple[int, ...]]:
    months = tuple(sorted({t.month for t in times}))
    Z = np.zeros((len(times), len(months)))
    Z[:, 0] = 1.0
    for c, m in enumerate(months[1:], start=1):
        Z[:, c] = [1.0 if t.month == m else 0.0 for t in times]
    return Z, months


def synth_generate(cfg: SynthConfig) -> SynthWorld:
    """Draw one world from the hierarchy; deterministic given cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    p, g, n = cfg.p, cfg.g, cfg.n

    if cfg.layout == "clustered":
        # monitoring-network style: tight groups supply the close pairs
        # that identify the short-range covariance
        n_clusters = max(p // cfg.cluster_size, 1)
        centers = rng.uniform(-cfg.box_km / 2, cfg.box_km / 2, size=(n_clusters, 2))
        coords = np.vstack(
            [c + rng.normal(0.0, cfg.cluster_sd_km, size=(cfg.cluster_size, 2)) for c in centers]
        )[:p]
        if coords.shape[0] < p:
            coords = np.vstack(
                [coords, rng.uniform(-cfg.box_km / 2, cfg.box_km / 2, size=(p - coords.shape[0], 2))]
            )
    else:
        coords = rng.uniform(-cfg.box_km / 2, cfg.box_km / 2, size=(p, 2))
    elev = rng.uniform(*cfg.elev_range_m, size=p)
    lons = -120.0 + coords[:, 0] / 80.0
    lats = 46.0 + coords[:, 1] / 111.0
    stations = StationTable(
        tuple(
            Station(
                id=f"S{j:03d}",
                geo=GeoPoint(float(lons[j]), float(lats[j])),
                proj=ProjPoint(float(coords[j, 0]), float(coords[j, 1])),
                elev_m=float(elev[j]),
            )
            for j in range(p)
        ),
        lcc=LccParams(ref_lon=-120.0, ref_lat=46.0),
    )
    times = tuple(cfg.start + dt.timedelta(days=i) for i in range(n))
    Z, months = _month_design(times)
    k = Z.shape[1]

    # prior mean surface: site-evaluated interaction trend
    b0 = _b0_from_trend(cfg, stations, months, rng)

    # residual covariance, possibly in a warped plane
    coords_d = (
        planted_warp(coords, cfg.warp_strength, cfg.warp_scale_km)
        if cfg.warp_strength != 0.0
        else coords.copy()
    )
    h = squareform(pdist(coords_d))
    rho = (1.0 - cfg.nugget_frac) * np.exp(-h / cfg.phi_km)
    np.fill_diagonal(rho, 1.0)
    sd = rng.uniform(*cfg.sd_range, size=p)
    sigma0 = sd[:, None] * rho * sd[None, :]
    psi_true = (cfg.delta - p - 1.0) * sigma0  # prior mean matches sigma0

    sigma = stats.invwishart.rvs(df=cfg.delta, scale=psi_true, random_state=rng)
    sigma = 0.5 * (sigma + sigma.T)

    if cfg.c > 0:
        f_inv = cfg.c * np.linalg.inv(Z.T @ Z)
        f_inv = 0.5 * (f_inv + f_inv.T)
        lf = np.linalg.cholesky(f_inv + 1e-12 * np.eye(k))
        lc = np.linalg.cholesky(sigma)
        B = b0 + lf @ rng.standard_normal((k, p)) @ lc.T
    else:
        f_inv = np.zeros((k, k))
        B = b0.copy()

    noise = rng.multivariate_normal(np.zeros(p), sigma, size=n, method="cholesky")
    values = Z @ B + noise
    obs = ObservationMatrix(
        values, times, np.zeros((n, p), dtype=bool), stations.ids
    )

    perm = rng.permutation(p)
    gauged_idx = np.sort(perm[:g])
    ungauged_idx = np.sort(perm[g:])
    ids = stations.ids
    return SynthWorld(
        cfg=cfg,
        stations=stations,
        obs=obs,
        times=times,
        Z=Z,
        b0=b0,
        f_inv=f_inv,
        psi_true=psi_true,
        sigma=sigma,
        B=B,
        coords_true_d=coords_d,
        gauged_idx=gauged_idx,
        ungauged_idx=ungauged_idx,
        split_train_ids=tuple(ids[int(j)] for j in gauged_idx),
        split_valid_ids=tuple(ids[int(j)] for j in ungauged_idx),
    )


def _b0_from_trend(cfg, stations, months, rng) -> np.ndarray:
    """Site-evaluated trend coefficients (k x p) for the generator."""
    p = len(stations)
    k = len(months)
    coords = stations.proj_coords()
    lon = (coords[:, 0] - coords[:, 0].mean()) / max(coords[:, 0].std(), 1e-9)
    lat = (coords[:, 1] - coords[:, 1].mean()) / max(coords[:, 1].std(), 1e-9)
    elev = stations.elevations()
    elev = (elev - elev.mean()) / max(elev.std(), 1e-9)
    c = dict(cfg.trend_coeffs)
    b0 = np.zeros((k, p))
    b0[0] = (
        c.get("const", 10.0)
        + c.get("long", 1.5) * lon
        + c.get("lat", -2.0) * lat
        + c.get("elev", -1.0) * elev
        + c.get("long:lat", 0.8) * lon * lat
        + c.get("long:elev", 0.5) * lon * elev
    )
    for r, m in enumerate(months[1:], start=1):
        b0[r] = (
            c.get(f"month_{m}", 1.2 * r)
            + c.get(f"long:month_{m}", 0.4 * r) * lon
            + c.get(f"lat:month_{m}", -0.3 * r) * lat
            + c.get(f"long:lat:month_{m}", 0.2) * lon * lat
        )
    return b0


# ---------------------------------------------------------------------------
# Gridded surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSurface:
    """Values interpolated onto a regular grid; NaN outside the station hull."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # ny x nx


def grid_surface(
    values,
    stations: StationTable,
    nx: int = 40,
    ny: int = 40,
) -> GridSurface:
    """Piecewise-linear interpolation over the station triangulation."""
    v = np.asarray(values, dtype=float)
    coords = stations.proj_coords()
    if v.shape != (len(stations),):
        raise DataError(f"values must have length {len(stations)}")
    if len(stations) < 3:
        raise DataError("need at least 3 stations")
    try:
        tri = Delaunay(coords)
    except QhullError as exc:
        raise DataError(f"collinear stations: {exc}") from None
    interp = LinearNDInterpolator(tri, v)
    xs = np.linspace(coords[:, 0].min(), coords[:, 0].max(), nx)
    ys = np.linspace(coords[:, 1].min(), coords[:, 1].max(), ny)
    gx, gy = np.meshgrid(xs, ys)
    return GridSurface(xs=xs, ys=ys, values=interp(gx, gy))
