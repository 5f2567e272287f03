"""Loading of station metadata, daily observations and climate-normal grids.

File formats (all plain text, UTF-8):

* stations CSV: header ``id,lon,lat,elev_m``.
* observations CSV: header ``station_id,date,tmax_c``, dates ISO-8601,
  long format with one row per (station, day) measurement.
* climate grid: line 1 ``ncols nrows origin_lon origin_lat cell_deg nodata``,
  followed by 12 monthly blocks (January first), each ``nrows`` lines of
  ``ncols`` space-separated reals. The origin is the centre of the
  south-west grid cell; rows run northward.
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass, field

import numpy as np

from stfield.errors import DataError
from stfield.geo import GeoPoint, LccParams, ProjPoint, project_lcc


@dataclass(frozen=True)
class Station:
    id: str
    geo: GeoPoint
    proj: ProjPoint
    elev_m: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.elev_m):
            raise DataError(f"station {self.id}: elevation not finite")


@dataclass(frozen=True)
class StationTable:
    """Ordered station list; the order defines observation-matrix columns."""

    stations: tuple[Station, ...]
    lcc: LccParams | None = None

    def __post_init__(self) -> None:
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate station id(s): {', '.join(dup)}")

    def __len__(self) -> int:
        return len(self.stations)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.stations)

    def index_of(self, station_id: str) -> int:
        try:
            return self.ids.index(station_id)
        except ValueError:
            raise DataError(f"unknown station id: {station_id}") from None

    def proj_coords(self) -> np.ndarray:
        """p x 2 array of projected (s1, s2) coordinates in km."""
        return np.array([[s.proj.s1, s.proj.s2] for s in self.stations], dtype=float)

    def elevations(self) -> np.ndarray:
        return np.array([s.elev_m for s in self.stations], dtype=float)

    def subset(self, ids) -> "StationTable":
        """New table containing ``ids`` in this table's order."""
        keep = set(ids)
        return StationTable(
            tuple(s for s in self.stations if s.id in keep), lcc=self.lcc
        )


@dataclass(frozen=True)
class ObservationMatrix:
    """n x p response matrix over days (rows) and stations (columns).

    ``mask`` is True where the value is missing; masked cells hold NaN.
    """

    values: np.ndarray
    times: tuple[dt.date, ...]
    mask: np.ndarray
    station_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        n, p = self.values.shape
        if n != len(self.times) or p != len(self.station_ids):
            raise DataError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.times)} times x {len(self.station_ids)} stations"
            )
        if self.mask.shape != self.values.shape:
            raise DataError("mask shape differs from values shape")

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_stations(self) -> int:
        return self.values.shape[1]

    def subset_stations(self, ids) -> "ObservationMatrix":
        cols = [self.station_ids.index(i) for i in ids]
        return ObservationMatrix(
            self.values[:, cols].copy(),
            self.times,
            self.mask[:, cols].copy(),
            tuple(ids),
        )


@dataclass(frozen=True)
class ClimateGrid:
    """Twelve monthly layers of long-run temperature normals on a lon/lat grid."""

    origin: GeoPoint
    cell_deg: float
    nrows: int
    ncols: int
    layers: np.ndarray  # 12 x nrows x ncols
    nodata: np.ndarray  # boolean, same shape

    def __post_init__(self) -> None:
        if self.cell_deg <= 0:
            raise DataError(f"cell_deg must be positive: {self.cell_deg}")
        if self.layers.shape != (12, self.nrows, self.ncols):
            raise DataError(f"layer stack has shape {self.layers.shape}")


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation partition of station ids."""

    train_ids: tuple[str, ...]
    valid_ids: tuple[str, ...]
    seed: int

    def __post_init__(self) -> None:
        if set(self.train_ids) & set(self.valid_ids):
            raise DataError("train and validation ids overlap")


def _csv_body(path, expected_header: list[str]):
    """Parsed CSV rows with physical line numbers; '#' comment lines skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        numbered = [
            (lineno, line)
            for lineno, line in enumerate(fh, start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
    if not numbered:
        raise DataError(f"{path}: empty file")
    parsed = list(csv.reader(line for _, line in numbered))
    header = [h.strip() for h in parsed[0]]
    if header != expected_header:
        raise DataError(
            f"{path}: expected header {','.join(expected_header)}, got {parsed[0]}"
        )
    return [(numbered[i][0], parsed[i]) for i in range(1, len(parsed))]


def load_stations(
    path,
    lcc: LccParams | None = None,
    *,
    std_parallel_1: float = 45.0,
    std_parallel_2: float = 49.0,
    earth_radius_km: float = 6371.0,
) -> StationTable:
    """Read the stations CSV and project coordinates.

    When ``lcc`` is None the projection reference point is the centroid of
    the loaded stations, with the given standard parallels and radius.
    """
    rows: list[tuple[str, GeoPoint, float]] = []
    for lineno, row in _csv_body(path, ["id", "lon", "lat", "elev_m"]):
        if len(row) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        sid = row[0].strip()
        try:
            lon, lat, elev = float(row[1]), float(row[2]), float(row[3])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: unparseable row: {exc}") from None
        rows.append((sid, GeoPoint(lon, lat), elev))

    seen: set[str] = set()
    for sid, _, _ in rows:
        if sid in seen:
            raise DataError(f"{path}: duplicate station id: {sid}")
        seen.add(sid)

    if not rows:
        warnings.warn(f"{path}: no stations found (header-only file)")
        return StationTable((), lcc=lcc)

    if lcc is None:
        lcc = LccParams(
            ref_lon=float(np.mean([g.lon_deg for _, g, _ in rows])),
            ref_lat=float(np.mean([g.lat_deg for _, g, _ in rows])),
            std_parallel_1=std_parallel_1,
            std_parallel_2=std_parallel_2,
            earth_radius=earth_radius_km,
        )
    stations = tuple(
        Station(sid, g, project_lcc(g, lcc), elev) for sid, g, elev in rows
    )
    return StationTable(stations, lcc=lcc)


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{where}: bad ISO date: {text!r}") from None


def load_observations(
    path,
    stations: StationTable,
    date_range: tuple[dt.date, dt.date] | None = None,
) -> ObservationMatrix:
    """Read the long-format observations CSV into an aligned matrix.

    Rows are the calendar days of ``date_range`` (inclusive; defaults to
    the observed span), columns follow the station-table order. Cells
    without a measurement are masked.
    """
    records: dict[tuple[str, dt.date], float] = {}
    known = set(stations.ids)
    for lineno, row in _csv_body(path, ["station_id", "date", "tmax_c"]):
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        sid = row[0].strip()
        if sid not in known:
            raise DataError(f"{path}:{lineno}: unknown station id: {sid}")
        day = _parse_date(row[1], f"{path}:{lineno}")
        try:
            value = float(row[2])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: unparseable value: {exc}") from None
        key = (sid, day)
        if key in records:
            raise DataError(f"{path}:{lineno}: duplicate (station, date) pair: {key}")
        records[key] = value

    if date_range is None:
        if not records:
            raise DataError(f"{path}: no observations")
        days = [d for _, d in records]
        date_range = (min(days), max(days))
    start, end = date_range
    if end < start:
        raise DataError(f"empty date range: {start}..{end}")
    times = tuple(
        start + dt.timedelta(days=i) for i in range((end - start).days + 1)
    )

    n, p = len(times), len(stations)
    values = np.full((n, p), np.nan)
    mask = np.ones((n, p), dtype=bool)
    t_index = {day: i for i, day in enumerate(times)}
    for (sid, day), value in records.items():
        ti = t_index.get(day)
        if ti is None:
            continue  # outside the requested range
        j = stations.index_of(sid)
        values[ti, j] = value
        mask[ti, j] = False
    return ObservationMatrix(values, times, mask, stations.ids)


def complete_cases(obs: ObservationMatrix, max_missing_frac: float) -> ObservationMatrix:
    """Station-first completion: drop leaky stations, then incomplete days.

    Stations whose missing fraction exceeds ``max_missing_frac`` are dropped
    first; any day still containing a missing cell is then dropped. The
    result has an empty mask.
    """
    if not (0.0 <= max_missing_frac < 1.0):
        raise DataError(f"max_missing_frac must be in [0, 1): {max_missing_frac}")
    frac = obs.mask.mean(axis=0)
    keep_cols = np.flatnonzero(frac <= max_missing_frac)
    if keep_cols.size == 0:
        raise DataError("no complete cases: every station exceeds the missing threshold")
    sub_mask = obs.mask[:, keep_cols]
    keep_rows = np.flatnonzero(~sub_mask.any(axis=1))
    if keep_rows.size == 0:
        raise DataError("no complete cases: every day has a missing cell")
    return ObservationMatrix(
        obs.values[np.ix_(keep_rows, keep_cols)].copy(),
        tuple(obs.times[i] for i in keep_rows),
        np.zeros((keep_rows.size, keep_cols.size), dtype=bool),
        tuple(obs.station_ids[j] for j in keep_cols),
    )


def load_climate_grid(path) -> ClimateGrid:
    """Parse the 12-layer ASCII climate-normal grid."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty grid file")
    head = lines[0].split()
    if len(head) != 6:
        raise DataError(f"{path}: header must have 6 fields, got {len(head)}")
    try:
        ncols, nrows = int(head[0]), int(head[1])
        origin = GeoPoint(float(head[2]), float(head[3]))
        cell_deg, nodata_value = float(head[4]), float(head[5])
    except ValueError as exc:
        raise DataError(f"{path}: bad header: {exc}") from None

    body = lines[1:]
    expected = 12 * nrows
    if len(body) != expected:
        raise DataError(
            f"{path}: expected {expected} data lines (12 layers x {nrows} rows), "
            f"got {len(body)}"
        )
    layers = np.empty((12, nrows, ncols))
    for m in range(12):
        for r in range(nrows):
            parts = body[m * nrows + r].split()
            if len(parts) != ncols:
                raise DataError(
                    f"{path}: ragged row (layer {m + 1}, row {r + 1}): "
                    f"expected {ncols} values, got {len(parts)}"
                )
            layers[m, r] = [float(v) for v in parts]
    nodata = layers == nodata_value
    return ClimateGrid(origin, cell_deg, nrows, ncols, layers, nodata)


def normal_at(grid: ClimateGrid, p: GeoPoint, month: int) -> float:
    """Bilinearly interpolate the monthly normal at a point.

    The grid origin is the centre of cell (0, 0); rows run northward and
    columns eastward in steps of ``cell_deg``.
    """
    if not 1 <= month <= 12:
        raise DataError(f"month out of range: {month}")
    fx = (p.lon_deg - grid.origin.lon_deg) / grid.cell_deg
    fy = (p.lat_deg - grid.origin.lat_deg) / grid.cell_deg
    if not (0.0 <= fx <= grid.ncols - 1 and 0.0 <= fy <= grid.nrows - 1):
        raise DataError(
            f"point ({p.lon_deg}, {p.lat_deg}) outside climate grid bounding box"
        )
    j0 = min(int(fx), grid.ncols - 2) if grid.ncols > 1 else 0
    i0 = min(int(fy), grid.nrows - 2) if grid.nrows > 1 else 0
    j1 = min(j0 + 1, grid.ncols - 1)
    i1 = min(i0 + 1, grid.nrows - 1)
    layer = grid.layers[month - 1]
    bad = grid.nodata[month - 1]
    if bad[i0, j0] or bad[i0, j1] or bad[i1, j0] or bad[i1, j1]:
        raise DataError("normal unavailable: adjacent nodata cell")
    tx = fx - j0
    ty = fy - i0
    top = layer[i1, j0] * (1 - tx) + layer[i1, j1] * tx
    bot = layer[i0, j0] * (1 - tx) + layer[i0, j1] * tx
    return float(bot * (1 - ty) + top * ty)


def split_train_validation(stations: StationTable, n_train: int, seed: int) -> SplitSpec:
    """Uniform random train/validation split, deterministic given the seed."""
    p = len(stations)
    if not 0 < n_train < p:
        raise DataError(f"n_train must be in (0, {p}): {n_train}")
    rng = np.random.default_rng(seed)
    train_idx = np.sort(rng.choice(p, size=n_train, replace=False))
    train = set(train_idx.tolist())
    ids = stations.ids
    return SplitSpec(
        train_ids=tuple(ids[i] for i in sorted(train)),
        valid_ids=tuple(ids[i] for i in range(p) if i not in train),
        seed=seed,
    )
