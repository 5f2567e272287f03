"""Spatio-temporal mean models: design matrices, least squares, diagnostics.

Three trend modes are supported:

* ``quadratic``  — second-order polynomial surface in the projected
  coordinates, one shared fit (or one per day via ``per_time_effects``).
* ``interaction`` — linear model in longitude, latitude and elevation with
  all two-way interactions of longitude x latitude x month plus the
  longitude x elevation interaction, month entering as categorical
  indicators with the first month as baseline.
* ``anomaly``    — intercept plus month indicators, intended for
  observations already reduced to climate-normal anomalies.

Covariates are centred and scaled by constants frozen into the
:class:`TrendSpec` so the same transformation applies at prediction time.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

from stfield.errors import DataError, NumericalError
from stfield.ingest import ClimateGrid, ObservationMatrix, StationTable, normal_at

MODES = ("quadratic", "interaction", "anomaly")


@dataclass(frozen=True)
class TrendSpec:
    """Mean-model specification with frozen covariate scaling constants.

    ``months`` lists the calendar months the model knows about; the first
    entry is the baseline and gets no indicator column. ``center_scale``
    maps covariate name -> (mean, sd) used to standardise it.
    """

    mode: str
    months: tuple[int, ...]
    center_scale: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DataError(f"unknown trend mode: {self.mode}")
        if len(set(self.months)) != len(self.months):
            raise DataError(f"repeated months: {self.months}")

    @classmethod
    def for_data(
        cls,
        mode: str,
        stations: StationTable,
        times,
        *,
        scale: bool = True,
    ) -> "TrendSpec":
        """Build a spec with months from ``times`` and scaling from ``stations``."""
        months = tuple(sorted({t.month for t in times}))
        cs: dict[str, tuple[float, float]] = {}
        if mode in ("quadratic", "interaction"):
            coords = stations.proj_coords()
            for name, col in (("long", coords[:, 0]), ("lat", coords[:, 1])):
                sd = float(np.std(col, ddof=1)) if len(col) > 1 else 1.0
                cs[name] = (float(np.mean(col)), sd if scale and sd > 0 else 1.0)
        if mode == "interaction":
            elev = stations.elevations()
            sd = float(np.std(elev, ddof=1)) if len(elev) > 1 else 1.0
            cs["elev"] = (float(np.mean(elev)), sd if scale and sd > 0 else 1.0)
        return cls(mode, months, cs)

    def standardize(self, name: str, values: np.ndarray) -> np.ndarray:
        mean, sd = self.center_scale.get(name, (0.0, 1.0))
        return (np.asarray(values, dtype=float) - mean) / sd


@dataclass(frozen=True)
class TrendModel:
    """Fitted trend: coefficients, their covariance, residuals."""

    spec: TrendSpec
    coeffs: np.ndarray
    labels: tuple[str, ...]
    coeff_cov: np.ndarray
    residuals: np.ndarray  # n x p
    sigma2_hat: float
    station_ids: tuple[str, ...]
    times: tuple[dt.date, ...]


@dataclass(frozen=True)
class EffectSeries:
    """Per-day latitude/longitude slope estimates with 95% CI half-widths."""

    times: tuple[dt.date, ...]
    lon_effect: np.ndarray
    lon_halfwidth: np.ndarray
    lat_effect: np.ndarray
    lat_halfwidth: np.ndarray


def _site_covariates(stations: StationTable, spec: TrendSpec):
    coords = stations.proj_coords()
    lon = spec.standardize("long", coords[:, 0])
    lat = spec.standardize("lat", coords[:, 1])
    if spec.mode == "interaction":
        elev_raw = stations.elevations()
        if not np.all(np.isfinite(elev_raw)):
            raise DataError("interaction mode requires finite elevation for all stations")
        elev = spec.standardize("elev", elev_raw)
    else:
        elev = np.zeros(len(stations))
    return lon, lat, elev


def _interaction_site_block(lon, lat, elev):
    """Site-level columns shared by every month: the non-month terms."""
    cols = [np.ones_like(lon), lon, lat, elev, lon * lat, lon * elev]
    labels = ["const", "long", "lat", "elev", "long:lat", "long:elev"]
    return cols, labels


def design_labels(spec: TrendSpec) -> tuple[str, ...]:
    """Column labels of the design matrix for a spec, in build order."""
    month_levels = spec.months[1:]
    if spec.mode == "quadratic":
        return ("const", "long", "lat", "long:lat", "long2", "lat2")
    if spec.mode == "anomaly":
        return ("const",) + tuple(f"month_{m}" for m in month_levels)
    labels = ["const", "long", "lat", "elev", "long:lat", "long:elev"]
    labels += [f"month_{m}" for m in month_levels]
    for prefix in ("long", "lat", "long:lat"):
        labels += [f"{prefix}:month_{m}" for m in month_levels]
    return tuple(labels)


def build_design(stations: StationTable, times, spec: TrendSpec):
    """Stack the day-major design matrix for the requested mode.

    Returns ``(X, labels)`` where X has one row per (day, station) pair,
    day index varying slowest, so row ``t*p + j`` belongs to day ``t`` and
    station ``j``.

    Column order in interaction mode: intercept; long; lat; elev;
    long*lat; long*elev; month indicators (baseline month omitted);
    long*month; lat*month; long*lat*month.
    """
    p = len(stations)
    n = len(times)
    if p == 0 or n == 0:
        raise DataError("empty design: no stations or no days")
    for t in times:
        if t.month not in spec.months:
            raise DataError(f"day {t} has month outside the model basis {spec.months}")
    lon, lat, elev = _site_covariates(stations, spec)

    month_levels = spec.months[1:]
    month_of_day = np.array([t.month for t in times])

    labels = design_labels(spec)
    if spec.mode == "quadratic":
        block = np.column_stack([np.ones(p), lon, lat, lon * lat, lon**2, lat**2])
        X = np.tile(block, (n, 1))
    elif spec.mode == "anomaly":
        X = np.zeros((n * p, len(labels)))
        X[:, 0] = 1.0
        for c, m in enumerate(month_levels, start=1):
            X[np.repeat(month_of_day == m, p), c] = 1.0
    else:  # interaction
        site_cols, _ = _interaction_site_block(lon, lat, elev)
        X = np.zeros((n * p, len(labels)))
        X[:, :6] = np.tile(np.column_stack(site_cols), (n, 1))
        nm = len(month_levels)
        for c, m in enumerate(month_levels):
            rows = np.repeat(month_of_day == m, p)
            X[rows, 6 + c] = 1.0
            X[rows, 6 + nm + c] = np.tile(lon, n)[rows]
            X[rows, 6 + 2 * nm + c] = np.tile(lat, n)[rows]
            X[rows, 6 + 3 * nm + c] = np.tile(lon * lat, n)[rows]

    _check_rank(X, labels)
    return X, labels


def _check_rank(X: np.ndarray, labels) -> None:
    # Collinearity check among the active (non-identically-zero) columns.
    # Structurally zero columns (months absent from the requested days) and
    # designs with fewer rows than active columns are legitimate outputs;
    # fitting such a design fails later in fit_ols instead.
    active = np.flatnonzero(np.abs(X).max(axis=0) > 0)
    if X.shape[0] < active.size:
        return
    Xa = X[:, active]
    _, r, piv = scipy.linalg.qr(Xa, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(Xa.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < Xa.shape[1]:
        dependent = sorted(labels[active[j]] for j in piv[rank:])
        raise NumericalError(
            "rank-deficient design; dependent columns: " + ", ".join(dependent)
        )


def fit_ols(obs: ObservationMatrix, X: np.ndarray, labels, spec: TrendSpec) -> TrendModel:
    """Least-squares trend fit on a complete-case matrix.

    The response is the day-major vectorisation of ``obs.values``;
    coefficient covariance is ``sigma2_hat * (X'X)^-1``.
    """
    if obs.mask.any():
        raise DataError("fit_ols requires a complete-case matrix (run complete_cases)")
    n, p = obs.values.shape
    y = obs.values.reshape(n * p)
    if X.shape[0] != y.size:
        raise DataError(f"design rows {X.shape[0]} != observations {y.size}")
    xtx = X.T @ X
    try:
        cho = scipy.linalg.cho_factor(xtx)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"singular normal equations: {exc}") from None
    coeffs = scipy.linalg.cho_solve(cho, X.T @ y)
    resid = y - X @ coeffs
    dof = y.size - X.shape[1]
    sigma2 = float(resid @ resid / dof) if dof > 0 else 0.0
    cov = sigma2 * scipy.linalg.cho_solve(cho, np.eye(X.shape[1]))
    cov = 0.5 * (cov + cov.T)
    return TrendModel(
        spec=spec,
        coeffs=coeffs,
        labels=tuple(labels),
        coeff_cov=cov,
        residuals=resid.reshape(n, p),
        sigma2_hat=sigma2,
        station_ids=obs.station_ids,
        times=obs.times,
    )


def fit_trend(obs: ObservationMatrix, stations: StationTable, spec: TrendSpec) -> TrendModel:
    """Convenience wrapper: build the design for ``obs`` and fit it."""
    sub = stations.subset(obs.station_ids)
    X, labels = build_design(sub, obs.times, spec)
    return fit_ols(obs, X, labels, spec)


def compute_anomalies(
    obs: ObservationMatrix, grid: ClimateGrid, stations: StationTable
) -> ObservationMatrix:
    """Subtract each station's monthly climate normal from each observation."""
    sub = stations.subset(obs.station_ids)
    normals = np.empty_like(obs.values)
    per_station_month: dict[tuple[int, int], float] = {}
    for i, day in enumerate(obs.times):
        for j, st in enumerate(sub.stations):
            key = (j, day.month)
            if key not in per_station_month:
                per_station_month[key] = normal_at(grid, st.geo, day.month)
            normals[i, j] = per_station_month[key]
    values = obs.values - normals
    values[obs.mask] = np.nan
    return ObservationMatrix(values, obs.times, obs.mask.copy(), obs.station_ids)


def per_time_effects(obs: ObservationMatrix, stations: StationTable) -> EffectSeries:
    """Fit the quadratic surface independently per day.

    Returns the longitude and latitude linear-effect estimates (slopes in
    degrees C per km, covariates centred but not scaled) with 95%
    confidence half-widths.
    """
    sub = stations.subset(obs.station_ids)
    coords = sub.proj_coords()
    lon = coords[:, 0] - coords[:, 0].mean()
    lat = coords[:, 1] - coords[:, 1].mean()
    Xd = np.column_stack([np.ones(len(sub)), lon, lat, lon * lat, lon**2, lat**2])
    k = Xd.shape[1]

    lon_eff, lon_hw, lat_eff, lat_hw = [], [], [], []
    for i, day in enumerate(obs.times):
        ok = ~obs.mask[i]
        m = int(ok.sum())
        if m < k + 1:
            raise DataError(f"day {day}: {m} stations < {k + 1} needed for the daily fit")
        Xi = Xd[ok]
        yi = obs.values[i, ok]
        xtx = Xi.T @ Xi
        try:
            cho = scipy.linalg.cho_factor(xtx)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"day {day}: singular daily design: {exc}") from None
        beta = scipy.linalg.cho_solve(cho, Xi.T @ yi)
        resid = yi - Xi @ beta
        s2 = float(resid @ resid / (m - k))
        cov = s2 * scipy.linalg.cho_solve(cho, np.eye(k))
        tcrit = float(stats.t.ppf(0.975, m - k))
        lon_eff.append(beta[1])
        lat_eff.append(beta[2])
        lon_hw.append(tcrit * np.sqrt(max(cov[1, 1], 0.0)))
        lat_hw.append(tcrit * np.sqrt(max(cov[2, 2], 0.0)))
    return EffectSeries(
        times=obs.times,
        lon_effect=np.array(lon_eff),
        lon_halfwidth=np.array(lon_hw),
        lat_effect=np.array(lat_eff),
        lat_halfwidth=np.array(lat_hw),
    )


def qq_data(model):
    """Ordered residuals paired with standard-normal quantiles.

    Accepts a fitted :class:`TrendModel` or a raw residual array; quantiles
    use the (i - 0.5)/N plotting positions.
    """
    resid = model.residuals if isinstance(model, TrendModel) else np.asarray(model)
    r = np.sort(resid.ravel())
    n = r.size
    theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return theo, r


def build_b0(model: TrendModel, stations_all: StationTable) -> np.ndarray:
    """Evaluate the fitted mean model per site into a (k x p) coefficient matrix.

    Row 0 carries the site-specific baseline (intercept plus all
    non-month terms evaluated at the site); row m carries the month-m
    adjustment (month main effect plus its interactions at the site), so
    that ``z_t @ B0`` with ``z_t = [1, I(month=m2), ...]`` reproduces the
    fitted mean at every site and day.
    """
    spec = model.spec
    if spec.mode not in ("interaction", "anomaly"):
        raise DataError(f"build_b0 supports interaction/anomaly modes, not {spec.mode}")
    p = len(stations_all)
    month_levels = spec.months[1:]
    k = 1 + len(month_levels)
    c = {label: model.coeffs[i] for i, label in enumerate(model.labels)}

    b0 = np.zeros((k, p))
    if spec.mode == "anomaly":
        b0[0, :] = c["const"]
        for r, m in enumerate(month_levels, start=1):
            b0[r, :] = c[f"month_{m}"]
        return b0

    lon, lat, elev = _site_covariates(stations_all, spec)
    b0[0, :] = (
        c["const"]
        + c["long"] * lon
        + c["lat"] * lat
        + c["elev"] * elev
        + c["long:lat"] * lon * lat
        + c["long:elev"] * lon * elev
    )
    for r, m in enumerate(month_levels, start=1):
        b0[r, :] = (
            c[f"month_{m}"]
            + c[f"long:month_{m}"] * lon
            + c[f"lat:month_{m}"] * lat
            + c[f"long:lat:month_{m}"] * lon * lat
        )
    return b0


def time_design(times, spec: TrendSpec) -> np.ndarray:
    """The (n x k) day-level design matching ``build_b0`` rows."""
    month_levels = spec.months[1:]
    Z = np.zeros((len(times), 1 + len(month_levels)))
    Z[:, 0] = 1.0
    for ccol, m in enumerate(month_levels, start=1):
        Z[:, ccol] = [1.0 if t.month == m else 0.0 for t in times]
    return Z
