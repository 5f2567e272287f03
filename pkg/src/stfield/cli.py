"""Batch command-line front end.

Commands:

* ``simulate``    - draw a synthetic world, write ingest-format CSVs
* ``pipeline``    - full hierarchical run: fit, predict, score, save state
* ``diagnostics`` - variogram/deformation/QQ/effect/surface artifacts
* ``krige``       - ordinary-kriging baseline run
* ``evaluate``    - score prediction CSVs, compare methods

Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.
Every artifact carries the config hash and the seeds that produced it;
identical configs reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from stfield.bayes import AssemblyOptions
from stfield.config import RunConfig, load_config
from stfield.deform import ProbeGrid, TpsMap, fold_check
from stfield.errors import ConfigError, DataError, NumericalError
from stfield.evaluate import (
    PredictionRecord,
    SynthConfig,
    compare_methods,
    evaluate,
    grid_surface,
    synth_generate,
)
from stfield.geo import LccParams
from stfield.ingest import (
    complete_cases,
    load_climate_grid,
    load_observations,
    load_stations,
    split_train_validation,
)
from stfield.pipeline import (
    StageError,
    fit_bsp,
    predict_bsp,
    prepare_trend,
    run_kriging,
)
from stfield.trend import per_time_effects, qq_data
from stfield import svg
from stfield.variogram import fit_exponential_variogram, semivariogram_with_envelope

STATE_FILE = "state.npz"


class ArtifactWriter:
    """Writes stamped artifacts and removes them all if the run fails."""

    def __init__(self, outdir: Path, header: list[str]):
        self.outdir = outdir
        self.header = header
        self.written: list[Path] = []
        outdir.mkdir(parents=True, exist_ok=True)

    def _open(self, name: str):
        path = self.outdir / name
        self.written.append(path)
        return path

    def csv(self, name: str, columns, rows):
        path = self._open(name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in self.header:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        return path

    def json(self, name: str, payload: dict):
        path = self._open(name)
        doc = {"_meta": {h.split("=", 1)[0]: h.split("=", 1)[1] for h in self.header}}
        doc.update(payload)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_fmt)
            fh.write("\n")
        return path

    def text(self, name: str, body: str):
        path = self._open(name)
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.header:
                fh.write(f"# {line}\n")
            fh.write(body)
            if not body.endswith("\n"):
                fh.write("\n")
        return path

    def svg(self, name: str, body: str):
        path = self._open(name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(body)
            fh.write("\n")
        return path

    def npz(self, name: str, **arrays):
        path = self._open(name)
        np.savez(path, **arrays)
        return path

    def cleanup(self):
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass


def _fmt(value):
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def _header(cfg: RunConfig, seeds: dict) -> list[str]:
    lines = [f"config_hash={cfg.config_hash}"]
    for key in sorted(seeds):
        lines.append(f"seed_{key}={seeds[key]}")
    return lines


def _lcc_from_config(cfg: RunConfig) -> LccParams | None:
    if cfg.ref_lon is None or cfg.ref_lat is None:
        return None
    return LccParams(
        ref_lon=cfg.ref_lon,
        ref_lat=cfg.ref_lat,
        std_parallel_1=cfg.std_parallel_1,
        std_parallel_2=cfg.std_parallel_2,
        earth_radius=cfg.earth_radius_km,
    )


def _load_inputs(cfg: RunConfig):
    stations = load_stations(
        cfg.stations_path,
        _lcc_from_config(cfg),
        std_parallel_1=cfg.std_parallel_1,
        std_parallel_2=cfg.std_parallel_2,
        earth_radius_km=cfg.earth_radius_km,
    )
    date_range = None
    if cfg.start_date is not None and cfg.end_date is not None:
        date_range = (cfg.start_date, cfg.end_date)
    obs = load_observations(cfg.observations_path, stations, date_range)
    grid = None
    if cfg.climate_grid_path is not None:
        grid = load_climate_grid(cfg.climate_grid_path)
    return stations, obs, grid


def _prepare(cfg: RunConfig):
    stations, obs, grid = _stage_wrap("ingest", _load_inputs, cfg)
    complete = _stage_wrap("ingest", complete_cases, obs, cfg.max_missing_frac)
    table = stations.subset(complete.station_ids)
    if cfg.n_train >= len(table):
        raise ConfigError(
            f"n_train={cfg.n_train} but only {len(table)} stations survive completion"
        )
    split = _stage_wrap(
        "ingest", split_train_validation, table, cfg.n_train, cfg.split_seed
    )
    prepared = prepare_trend(complete, stations, split, cfg.trend_mode, grid)
    return prepared, split


def _stage_wrap(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (StageError, ConfigError):
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    seeds = {"sim": cfg.sim_seed}
    writer = ArtifactWriter(Path(cfg.output_dir), _header(cfg, seeds))
    try:
        world = synth_generate(
            SynthConfig(
                p=cfg.sim_p,
                g=cfg.sim_g,
                n=cfg.sim_n_days,
                delta=cfg.sim_delta,
                c=cfg.sim_c,
                seed=cfg.sim_seed,
                box_km=cfg.sim_box_km,
                start=cfg.sim_start_date,
                sd_range=(cfg.sim_sd_min, cfg.sim_sd_max),
                phi_km=cfg.sim_phi_km,
                nugget_frac=cfg.sim_nugget_frac,
                warp_strength=cfg.sim_warp_strength,
                warp_scale_km=cfg.sim_warp_scale_km,
            )
        )
        writer.csv(
            "stations.csv",
            ["id", "lon", "lat", "elev_m"],
            [
                [s.id, s.geo.lon_deg, s.geo.lat_deg, s.elev_m]
                for s in world.stations.stations
            ],
        )
        writer.csv(
            "observations.csv",
            ["station_id", "date", "tmax_c"],
            [
                [sid, day, world.obs.values[i, j]]
                for i, day in enumerate(world.times)
                for j, sid in enumerate(world.stations.ids)
            ],
        )
        writer.npz(
            "sim_truth.npz",
            b0=world.b0,
            f_inv=world.f_inv,
            psi_true=world.psi_true,
            sigma=world.sigma,
            B=world.B,
            Z=world.Z,
            coords_true_d=world.coords_true_d,
            gauged_idx=world.gauged_idx,
            ungauged_idx=world.ungauged_idx,
            train_ids=np.array(world.split_train_ids),
            valid_ids=np.array(world.split_valid_ids),
        )
        print(f"simulate: wrote {cfg.sim_p} stations x {cfg.sim_n_days} days")
        return 0
    except Exception as exc:
        writer.cleanup()
        raise exc


def cmd_pipeline(cfg: RunConfig) -> int:
    seeds = {"split": cfg.split_seed, "variogram": cfg.variogram_seed}
    writer = ArtifactWriter(Path(cfg.output_dir), _header(cfg, seeds))
    try:
        prepared, split = _prepare(cfg)
        options = AssemblyOptions(delta_grid=cfg.delta_grid, c_grid=cfg.c_grid)
        fit = fit_bsp(
            prepared,
            lambda_candidates=cfg.lambda_candidates,
            assembly_options=options,
            prefilter_ar1=cfg.prefilter_ar1,
        )
        out = predict_bsp(
            fit,
            level=cfg.coverage_level,
            d_formula=cfg.d_formula,
            method_label="bayes_" + cfg.trend_mode,
        )
        _write_predictions(writer, "predictions.csv", out.records, fit.hyperparams.delta)
        _write_metrics(writer, "metrics", out.metrics)
        writer.json(
            "hyperparams.json",
            {
                "delta": fit.hyperparams.delta,
                "c": fit.assembly.chosen_c,
                "psi_scale": fit.assembly.psi_scale,
                "grid": [list(row) for row in fit.assembly.rows],
                "lambda_chosen": fit.selection.chosen,
                "lambda_rows": [list(r) for r in fit.selection.rows],
                "lambda_warning": fit.selection.warning,
                "variogram": {
                    "nugget": fit.variogram_fit.nugget,
                    "sill": fit.variogram_fit.sill,
                    "range_phi": fit.variogram_fit.range_phi,
                    "flags": list(fit.variogram_fit.flags),
                },
                "mds_stress": fit.dspace.stress,
                "psi_floored": fit.extension.floored,
                "ar1_coefficient": fit.ar1_coefficient,
                "n_train": len(split.train_ids),
                "n_valid": len(split.valid_ids),
            },
        )
        _write_state(writer, cfg, prepared, fit)
        print(
            f"pipeline: lambda={fit.selection.chosen} delta={fit.hyperparams.delta} "
            f"c={fit.assembly.chosen_c} coverage={out.metrics.coverage:.3f} "
            f"mspe={out.metrics.overall_mspe:.3f}"
        )
        print(f"pipeline: seeds split={cfg.split_seed} variogram={cfg.variogram_seed}")
        return 0
    except Exception:
        writer.cleanup()
        raise


def cmd_krige(cfg: RunConfig) -> int:
    seeds = {"split": cfg.split_seed}
    writer = ArtifactWriter(Path(cfg.output_dir), _header(cfg, seeds))
    try:
        prepared, split = _prepare(cfg)
        out = run_kriging(prepared, level=cfg.coverage_level)
        _write_predictions(writer, "predictions_kriging.csv", out.records, None)
        _write_metrics(writer, "metrics_kriging", out.metrics)
        writer.csv(
            "kriging_fits.csv",
            ["date", "sigma2", "phi", "tau2", "loglik", "converged"],
            [
                [day, f.sigma2, f.phi, f.tau2, f.loglik, int(f.converged)]
                for day, f in out.daily_fits
            ],
        )
        print(
            f"krige: coverage={out.metrics.coverage:.3f} "
            f"mspe={out.metrics.overall_mspe:.3f}"
        )
        return 0
    except Exception:
        writer.cleanup()
        raise


def cmd_diagnostics(cfg: RunConfig) -> int:
    state_path = Path(cfg.output_dir) / STATE_FILE
    if not state_path.exists():
        raise DataError(
            f"missing pipeline state {state_path}; run the pipeline command first"
        )
    state = np.load(state_path, allow_pickle=False)
    seeds = {"split": cfg.split_seed, "variogram": cfg.variogram_seed}
    writer = ArtifactWriter(Path(cfg.output_dir), _header(cfg, seeds))
    try:
        _emit_diagnostics(cfg, writer, state)
        print(f"diagnostics: artifacts in {cfg.output_dir}")
        return 0
    except Exception:
        writer.cleanup()
        raise


def cmd_evaluate(cfg: RunConfig) -> int:
    if not cfg.predictions_paths:
        raise ConfigError("evaluate needs predictions_paths (config or --predictions)")
    labels = cfg.method_labels or tuple(
        Path(p).stem for p in cfg.predictions_paths
    )
    writer = ArtifactWriter(Path(cfg.output_dir), _header(cfg, {}))
    try:
        stations, obs, _ = _stage_wrap("ingest", _load_inputs, cfg)
        reports = []
        for path, lab in zip(cfg.predictions_paths, labels):
            records = _read_predictions(path)
            ids = tuple(sorted({r.station_id for r in records}))
            times = tuple(sorted({r.time for r in records}))
            truth = _stage_wrap(
                "evaluate", _truth_subset, obs, ids, times
            )
            rep = _stage_wrap(
                "evaluate", evaluate, records, truth, cfg.coverage_level, lab
            )
            _write_metrics(writer, f"metrics_{lab}", rep)
            reports.append(rep)
        if len(reports) >= 2:
            table = compare_methods(reports)
            rows = list(table.to_csv_rows())
            writer.csv("comparison.csv", rows[0], rows[1:])
            writer.text("comparison.txt", table.to_text())
            print(table.to_text())
        else:
            rep = reports[0]
            print(
                f"evaluate[{rep.method_label}]: coverage={rep.coverage:.3f} "
                f"mspe={rep.overall_mspe:.3f}"
            )
        return 0
    except Exception:
        writer.cleanup()
        raise


def _truth_subset(obs, ids, times):
    sub = obs.subset_stations([i for i in obs.station_ids if i in set(ids)])
    keep = [i for i, t in enumerate(sub.times) if t in set(times)]
    from stfield.ingest import ObservationMatrix

    return ObservationMatrix(
        sub.values[keep],
        tuple(sub.times[i] for i in keep),
        sub.mask[keep],
        sub.station_ids,
    )


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------

def _write_predictions(writer, name, records, dof):
    writer.csv(
        name,
        ["station_id", "date", "point", "low", "high", "dof"],
        [
            [r.station_id, r.time, r.point, r.low, r.high, "" if dof is None else dof]
            for r in records
        ],
    )


def _write_metrics(writer, base, rep):
    writer.csv(
        f"{base}_by_station.csv",
        ["station_id", "mspe"],
        sorted(rep.mspe_by_station.items()),
    )
    writer.csv(
        f"{base}_by_time.csv",
        ["date", "mspe"],
        sorted(rep.mspe_by_time.items()),
    )
    writer.json(
        f"{base}.json",
        {
            "method": rep.method_label,
            "overall_mspe": rep.overall_mspe,
            "overall_mspe_se": rep.overall_mspe_se,
            "coverage": rep.coverage,
            "level": rep.level,
            "n_events": rep.n_events,
            "se_definition": "sd of per-station MSPEs / sqrt(n_stations)",
        },
    )


def _read_predictions(path) -> list[PredictionRecord]:
    records = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"predictions file not found: {path}") from None
    with fh:
        rows = [r for r in csv.reader(ln for ln in fh if not ln.startswith("#"))]
    if not rows or rows[0][:5] != ["station_id", "date", "point", "low", "high"]:
        raise DataError(f"{path}: expected predictions CSV header")
    for row in rows[1:]:
        records.append(
            PredictionRecord(
                station_id=row[0],
                time=dt.date.fromisoformat(row[1]),
                point=float(row[2]),
                low=float(row[3]),
                high=float(row[4]),
            )
        )
    return records


def _write_state(writer, cfg, prepared, fit):
    sel = fit.selection
    writer.npz(
        STATE_FILE,
        obs_values=prepared.obs.values,
        work_values=prepared.work.values,
        times=np.array([t.isoformat() for t in prepared.obs.times]),
        station_ids=np.array(prepared.obs.station_ids),
        coords=prepared.stations.proj_coords(),
        elev=prepared.stations.elevations(),
        gauged_idx=prepared.gauged_idx,
        ungauged_idx=prepared.ungauged_idx,
        resid=prepared.model.residuals,
        corr=fit.dispersion.corr,
        disp=fit.dispersion.disp,
        dspace_coords=fit.dspace.coords_d,
        mds_stress_trace=np.array(fit.dspace.stress_trace),
        lambda_values=np.array([row[0] for row in sel.rows]),
        lambda_fold=np.array([row[1] for row in sel.rows]),
        lambda_rmse=np.array([row[2] for row in sel.rows]),
        lambda_chosen=np.array(sel.chosen),
        dcoords_per_lambda=np.stack(
            [
                _apply_map(m, prepared.stations.proj_coords()[prepared.gauged_idx])
                for m in sel.maps
            ]
        ),
        tps_affine=fit.tps.affine,
        tps_weights=fit.tps.weights,
        tps_knots=fit.tps.knots,
        tps_center=fit.tps.center,
        tps_scale=np.array(fit.tps.scale),
        tps_lam=np.array(fit.tps.lam),
        vfit=np.array(
            [
                fit.variogram_fit.nugget,
                fit.variogram_fit.sill,
                fit.variogram_fit.range_phi,
            ]
        ),
        psi=fit.hyperparams.psi,
        b0=fit.hyperparams.b0,
        Z=prepared.Z,
        delta=np.array(fit.hyperparams.delta),
        trend_mode=np.array(cfg.trend_mode),
    )


def _apply_map(tps: TpsMap, pts):
    from stfield.deform import apply_tps

    return apply_tps(tps, pts)


def _emit_diagnostics(cfg: RunConfig, writer: ArtifactWriter, state) -> None:
    from stfield.ingest import ObservationMatrix

    times = [dt.date.fromisoformat(str(t)) for t in state["times"]]
    station_ids = tuple(str(s) for s in state["station_ids"])
    values = state["obs_values"]
    coords = state["coords"]
    gauged_idx = state["gauged_idx"]
    comments = list(writer.header)

    # 1. binned variograms with permutation envelopes, first and last day
    for tag, row in (("first", 0), ("last", len(times) - 1)):
        bv = semivariogram_with_envelope(
            values[row],
            coords,
            n_bins=cfg.n_bins,
            n_perm=cfg.n_permutations,
            seed=cfg.variogram_seed,
        )
        filled = bv.pair_counts > 0
        day_fit = None
        if int(np.count_nonzero(filled)) >= 3:
            try:
                day_fit = fit_exponential_variogram(
                    bv.bin_midpoints[filled],
                    bv.gamma_hat[filled],
                    bv.pair_counts[filled],
                )
            except (DataError, NumericalError):
                day_fit = None
        writer.csv(
            f"variogram_{tag}.csv",
            ["bin_mid_km", "gamma", "pairs", "env_low", "env_high"],
            [
                [bv.bin_midpoints[i], bv.gamma_hat[i], bv.pair_counts[i],
                 bv.envelope_low[i], bv.envelope_high[i]]
                for i in range(len(bv.bin_midpoints))
            ],
        )
        writer.svg(f"variogram_{tag}.svg", svg.variogram_svg(bv, day_fit, comments))

    # 2. D-space scatter per smoothing candidate
    lambda_values = state["lambda_values"]
    dcoords = state["dcoords_per_lambda"]
    for li, lam in enumerate(lambda_values):
        tag = _fmt_lambda(lam)
        writer.csv(
            f"dspace_lambda_{tag}.csv",
            ["station_id", "d1", "d2"],
            [
                [station_ids[int(j)], dcoords[li, jj, 0], dcoords[li, jj, 1]]
                for jj, j in enumerate(gauged_idx)
            ],
        )
        writer.svg(
            f"dspace_lambda_{tag}.svg",
            svg.scatter_svg(dcoords[li], f"D-space (lambda={lam:g})", comments),
        )

    # 3. stretch grid of the chosen map
    tps = TpsMap(
        lam=float(state["tps_lam"]),
        affine=state["tps_affine"],
        weights=state["tps_weights"],
        knots=state["tps_knots"],
        center=state["tps_center"],
        scale=float(state["tps_scale"]),
    )
    probe = ProbeGrid.covering(coords[gauged_idx], nx=16, ny=16)
    diag = fold_check(tps, probe)
    writer.csv(
        "stretch_grid.csv",
        ["cell_x_km", "cell_y_km", "jacobian_det", "sv_max", "sv_min"],
        [
            [diag.cell_x[i], diag.cell_y[i], diag.jac_det[i],
             diag.singular_values[i, 0], diag.singular_values[i, 1]]
            for i in range(diag.cell_x.size)
        ],
    )
    writer.svg("stretch_grid.svg", svg.stretch_svg(diag, 16, 16, comments))

    # 4. residual quantile-quantile series
    theo, order = qq_data(state["resid"])
    writer.csv(
        "qq.csv",
        ["theoretical_quantile", "ordered_residual"],
        [[theo[i], order[i]] for i in range(order.size)],
    )
    writer.svg("qq.svg", svg.qq_svg(theo, order, comments))

    # 5. per-day latitude/longitude effect series
    obs = ObservationMatrix(
        values, tuple(times), np.zeros_like(values, dtype=bool), station_ids
    )
    from stfield.ingest import Station, StationTable
    from stfield.geo import GeoPoint, ProjPoint

    table = StationTable(
        tuple(
            Station(
                id=station_ids[j],
                geo=GeoPoint(0.0, 0.0),
                proj=ProjPoint(float(coords[j, 0]), float(coords[j, 1])),
                elev_m=float(state["elev"][j]),
            )
            for j in range(len(station_ids))
        )
    )
    series = per_time_effects(obs, table)
    writer.csv(
        "effects.csv",
        ["date", "lon_effect", "lon_halfwidth", "lat_effect", "lat_halfwidth"],
        [
            [times[i], series.lon_effect[i], series.lon_halfwidth[i],
             series.lat_effect[i], series.lat_halfwidth[i]]
            for i in range(len(times))
        ],
    )
    writer.svg("effects.svg", svg.effects_svg(series, comments))

    # 6. monthly mean surfaces by triangulated interpolation
    months = sorted({t.month for t in times})
    for m in months:
        rows = [i for i, t in enumerate(times) if t.month == m]
        mean_by_station = values[rows].mean(axis=0)
        surf = grid_surface(mean_by_station, table, nx=30, ny=30)
        writer.csv(
            f"surface_month_{m:02d}.csv",
            ["s2_km\\s1_km", *[repr(float(x)) for x in surf.xs]],
            [
                [repr(float(surf.ys[i])), *[_nan_fmt(v) for v in surf.values[i]]]
                for i in range(surf.ys.size)
            ],
        )
        writer.svg(
            f"surface_month_{m:02d}.svg",
            svg.surface_svg(surf, f"monthly mean surface, month {m}", comments),
        )


def _fmt_lambda(lam: float) -> str:
    return f"{float(lam):g}".replace(".", "p")


def _nan_fmt(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stfield",
        description="spatio-temporal temperature field modelling",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "pipeline", "diagnostics", "krige", "evaluate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the TOML run configuration")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--trend-mode", dest="trend_mode", choices=["interaction", "anomaly"])
        p.add_argument("--split-seed", dest="split_seed", type=int)
        p.add_argument("--sim-seed", dest="sim_seed", type=int)
        p.add_argument("--d-formula", dest="d_formula", choices=["corrected", "literal"])
        if name == "evaluate":
            p.add_argument("--predictions", dest="predictions_paths", nargs="+")
            p.add_argument("--labels", dest="method_labels", nargs="+")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "pipeline": cmd_pipeline,
    "diagnostics": cmd_diagnostics,
    "krige": cmd_krige,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    import os

    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "output_dir",
            "trend_mode",
            "split_seed",
            "sim_seed",
            "d_formula",
            "predictions_paths",
            "method_labels",
        )
    }
    # command-line paths are relative to the invocation directory, not the
    # config file like paths written inside the config
    if overrides.get("output_dir") is not None:
        overrides["output_dir"] = os.path.abspath(overrides["output_dir"])
    if overrides.get("predictions_paths") is not None:
        overrides["predictions_paths"] = [
            os.path.abspath(p) for p in overrides["predictions_paths"]
        ]
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        code = _exit_code_for(exc.cause)
        print(f"error in stage {exc.stage!r}: {exc.cause}", file=sys.stderr)
        return code
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


def _exit_code_for(cause: Exception) -> int:
    if isinstance(cause, ConfigError):
        return 2
    if isinstance(cause, (DataError, OSError)):
        return 3
    return 4


if __name__ == "__main__":
    raise SystemExit(main())
