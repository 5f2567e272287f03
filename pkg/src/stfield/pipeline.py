"""End-to-end model fitting and prediction chains.

Two prediction routes share the same trend handling:

* the hierarchical route: trend residuals -> dispersions -> D-space
  embedding -> smoothing spline -> D-space variogram -> covariance
  extension -> hyperparameter assembly -> closed-form predictive law;
* the kriging baseline: per-day ML exponential covariance on the same
  residuals, ordinary kriging at the validation sites, normal intervals,
  trend added back.

Stage failures are wrapped in :class:`StageError` naming the stage.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist

from stfield.bayes import (
    AssemblyOptions,
    AssemblyReport,
    BspHyperparams,
    assemble_hyperparams,
    predict_interval,
    predict_point,
    predictive_distribution,
    prefilter_lag1,
)
from stfield.deform import (
    CovarianceExtension,
    DSpaceConfig,
    DispersionMatrix,
    LambdaSelection,
    TpsMap,
    apply_tps,
    dispersion_matrix,
    extend_covariance,
    mds_embed,
    select_lambda,
)
from stfield.errors import DataError
from stfield.evaluate import MetricsReport, PredictionRecord, evaluate
from stfield.ingest import (
    ClimateGrid,
    ObservationMatrix,
    SplitSpec,
    StationTable,
)
from stfield.kriging import MlCovFit, fit_ml_exponential, ordinary_krige
from stfield.trend import (
    TrendModel,
    TrendSpec,
    build_b0,
    compute_anomalies,
    fit_trend,
    time_design,
)
from stfield.variogram import ExpVariogramFit, fit_exponential_variogram


class StageError(Exception):
    """Failure of a named pipeline stage, preserving the original cause."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class Prepared:
    """Trend-level state shared by both prediction routes."""

    stations: StationTable  # complete-case stations, table order
    obs: ObservationMatrix  # complete-case observations, original scale
    work: ObservationMatrix  # what the trend was fitted on (anomalies or obs)
    normals: np.ndarray | None  # n x p offsets when in anomaly mode
    spec: TrendSpec
    model: TrendModel
    b0: np.ndarray
    Z: np.ndarray
    gauged_idx: np.ndarray
    ungauged_idx: np.ndarray


@dataclass(frozen=True)
class BspFitResult:
    prepared: Prepared
    dispersion: DispersionMatrix
    dspace: DSpaceConfig
    selection: LambdaSelection
    tps: TpsMap
    variogram_fit: ExpVariogramFit
    extension: CovarianceExtension
    hyperparams: BspHyperparams
    assembly: AssemblyReport
    ar1_coefficient: float | None


@dataclass(frozen=True)
class PredictionOutput:
    records: list[PredictionRecord]
    metrics: MetricsReport


@dataclass(frozen=True)
class KrigingOutput:
    records: list[PredictionRecord]
    metrics: MetricsReport
    daily_fits: list[tuple[dt.date, MlCovFit]]


def prepare_trend(
    obs: ObservationMatrix,
    stations: StationTable,
    split: SplitSpec,
    mode: str,
    grid: ClimateGrid | None = None,
) -> Prepared:
    """Fit the configured trend on the gauged stations.

    In anomaly mode the observations are first reduced by the monthly
    climate normals; the stored offsets put predictions back on the
    original scale.
    """
    stations = stations.subset(obs.station_ids)
    if mode == "anomaly":
        if grid is None:
            raise DataError("anomaly mode requires a climate grid")
        work = _stage("trend", compute_anomalies, obs, grid, stations)
        normals = obs.values - work.values
    elif mode == "interaction":
        work = obs
        normals = None
    else:
        raise DataError(f"pipeline trend mode must be interaction or anomaly: {mode}")

    train_ids = tuple(sid for sid in obs.station_ids if sid in set(split.train_ids))
    valid_ids = tuple(sid for sid in obs.station_ids if sid in set(split.valid_ids))
    if len(train_ids) < 3:
        raise DataError(f"only {len(train_ids)} training stations after completion")
    if not valid_ids:
        raise DataError("no validation stations after completion")

    work_train = work.subset_stations(train_ids)
    spec = TrendSpec.for_data(
        "anomaly" if mode == "anomaly" else "interaction",
        stations.subset(train_ids),
        work.times,
    )
    model = _stage("trend", fit_trend, work_train, stations, spec)
    b0 = _stage("trend", build_b0, model, stations)
    Z = time_design(work.times, spec)
    ids = obs.station_ids
    gauged_idx = np.array([ids.index(s) for s in train_ids])
    ungauged_idx = np.array([ids.index(s) for s in valid_ids])
    return Prepared(
        stations=stations,
        obs=obs,
        work=work,
        normals=normals,
        spec=spec,
        model=model,
        b0=b0,
        Z=Z,
        gauged_idx=gauged_idx,
        ungauged_idx=ungauged_idx,
    )


def fit_bsp(
    prepared: Prepared,
    lambda_candidates=(0.0, 1.0, 2.0, 5.0, 10.0, 50.0),
    assembly_options: AssemblyOptions | None = None,
    prefilter_ar1: bool = False,
) -> BspFitResult:
    """Estimate the nonstationary covariance and assemble hyperparameters."""
    resid = prepared.model.residuals
    ar1 = None
    resid_est = resid
    if prefilter_ar1:
        resid_est, ar1 = _stage("deform", prefilter_lag1, resid)

    dm = _stage("deform", dispersion_matrix, resid_est)
    train_coords = prepared.stations.proj_coords()[prepared.gauged_idx]
    dcfg = _stage("deform", mds_embed, dm, train_coords)
    # Nonmetric embedding fixes the D-space scale only up to a constant;
    # pin it to the geographic RMS distance so the deformation is a pure
    # shape change and stretch diagnostics read as local expansion factors.
    scale = float(
        np.sqrt(np.mean(pdist(train_coords) ** 2) / np.mean(pdist(dcfg.coords_d) ** 2))
    )
    target_d = dcfg.coords_d * scale
    sel = _stage("deform", select_lambda, train_coords, target_d, lambda_candidates)
    tps = sel.maps[[row[0] for row in sel.rows].index(sel.chosen)]

    d_gauged = apply_tps(tps, train_coords)
    hd = pdist(d_gauged)
    g = train_coords.shape[0]
    gamma = 1.0 - dm.corr[np.triu_indices(g, k=1)]
    # bin the dispersion cloud before fitting: count-weighted bin means tame
    # the per-pair noise of the correlation estimates
    n_bins = int(np.clip(g, 10, 25))
    edges = np.linspace(0.0, float(hd.max()) * (1 + 1e-12), n_bins + 1)
    idx = np.clip(np.digitize(hd, edges[1:-1]), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=gamma, minlength=n_bins)
    filled = counts > 0
    mids = 0.5 * (edges[:-1] + edges[1:])
    vfit = _stage(
        "fit",
        fit_exponential_variogram,
        mids[filled],
        sums[filled] / counts[filled],
        counts[filled].astype(float),
    )

    sd_g = resid_est.std(axis=0, ddof=1)
    ext = _stage(
        "fit", extend_covariance, prepared.stations, prepared.gauged_idx, tps, vfit, sd_g
    )
    hp, report = _stage(
        "fit",
        assemble_hyperparams,
        prepared.model,
        prepared.b0,
        ext.psi,
        prepared.Z,
        prepared.gauged_idx,
        assembly_options or AssemblyOptions(),
    )
    return BspFitResult(
        prepared=prepared,
        dispersion=dm,
        dspace=dcfg,
        selection=sel,
        tps=tps,
        variogram_fit=vfit,
        extension=ext,
        hyperparams=hp,
        assembly=report,
        ar1_coefficient=ar1,
    )


def predict_bsp(
    fit: BspFitResult,
    level: float = 0.95,
    d_formula: str = "corrected",
    method_label: str = "bayes",
) -> PredictionOutput:
    """Daily predictive intervals at the validation sites plus metrics."""
    prepared = fit.prepared
    hp = fit.hyperparams
    records: list[PredictionRecord] = []
    valid_ids = [prepared.obs.station_ids[j] for j in prepared.ungauged_idx]
    for i, day in enumerate(prepared.work.times):
        y_g = prepared.work.values[i, prepared.gauged_idx]
        pt = _stage(
            "predict", predictive_distribution, y_g, prepared.Z[i], hp, d_formula
        )
        mu = predict_point(pt)
        lohi = predict_interval(pt, level)
        for jj, sid in enumerate(valid_ids):
            offset = 0.0
            if prepared.normals is not None:
                offset = float(prepared.normals[i, prepared.ungauged_idx[jj]])
            records.append(
                PredictionRecord(
                    station_id=sid,
                    time=day,
                    point=float(mu[jj]) + offset,
                    low=float(lohi[jj, 0]) + offset,
                    high=float(lohi[jj, 1]) + offset,
                )
            )
    truth = prepared.obs.subset_stations(valid_ids)
    metrics = _stage("evaluate", evaluate, records, truth, level, method_label)
    return PredictionOutput(records=records, metrics=metrics)


def run_kriging(
    prepared: Prepared,
    level: float = 0.95,
    method_label: str = "ordinary_kriging",
) -> KrigingOutput:
    """Per-day ML fits and ordinary kriging of the trend residuals."""
    resid = prepared.model.residuals
    coords = prepared.stations.proj_coords()
    train_coords = coords[prepared.gauged_idx]
    valid_coords = coords[prepared.ungauged_idx]
    valid_ids = [prepared.obs.station_ids[j] for j in prepared.ungauged_idx]
    zq = float(stats.norm.ppf(0.5 * (1.0 + level)))

    records: list[PredictionRecord] = []
    fits: list[tuple[dt.date, MlCovFit]] = []
    trend_at_valid = prepared.Z @ prepared.b0[:, prepared.ungauged_idx]
    for i, day in enumerate(prepared.work.times):
        fit = _stage("krige", fit_ml_exponential, resid[i], train_coords)
        fits.append((day, fit))
        preds = _stage("krige", ordinary_krige, resid[i], train_coords, valid_coords, fit)
        for jj, sid in enumerate(valid_ids):
            offset = float(trend_at_valid[i, jj])
            if prepared.normals is not None:
                offset += float(prepared.normals[i, prepared.ungauged_idx[jj]])
            hw = zq * float(np.sqrt(preds[jj].variance))
            value = preds[jj].value + offset
            records.append(
                PredictionRecord(
                    station_id=sid,
                    time=day,
                    point=value,
                    low=value - hw,
                    high=value + hw,
                )
            )
    truth = prepared.obs.subset_stations(valid_ids)
    metrics = _stage("evaluate", evaluate, records, truth, level, method_label)
    return KrigingOutput(records=records, metrics=metrics, daily_fits=fits)
