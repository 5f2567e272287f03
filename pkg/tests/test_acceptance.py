"""Acceptance gate: one test per release criterion, at stated tolerances.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail line
per criterion; each test also prints an [acceptance NN] marker on success.
"""

import time

import numpy as np
import pytest
from scipy import stats

from stfield.bayes import (
    BspHyperparams,
    predict_interval,
    predictive_distribution,
)
from stfield.deform import (
    DispersionMatrix,
    ProbeGrid,
    apply_tps,
    fit_tps,
    fold_check,
    mds_embed,
)
from stfield.evaluate import SynthConfig, synth_generate
from stfield.ingest import SplitSpec
from stfield.kriging import MlCovFit, fit_ml_exponential, ordinary_krige
from stfield.pipeline import fit_bsp, predict_bsp, prepare_trend, run_kriging
from stfield.trend import TrendSpec, build_b0, build_design, fit_ols
from stfield.variogram import (
    empirical_semivariogram,
    fit_exponential_variogram,
    semivariogram_with_envelope,
)

from conftest import make_obs, random_station_table
from oracles import conditional_mc
from test_deform import _disp_from_config, procrustes_residual
from test_kriging import clustered_network, sim_field
from test_trend import JAN_JUN_DAYS, _mean_oracle
from test_variogram import _oracle_grid_search


def _report(num: int, name: str) -> None:
    print(f"[acceptance {num:02d}] {name}: PASS")


# ---------------------------------------------------------------------------
# 1. Predictive-law oracle equivalence
# ---------------------------------------------------------------------------

def test_c01_predictive_law_matches_rejection_mc():
    t0 = time.perf_counter()
    rng = np.random.default_rng(314)
    A = rng.normal(size=(4, 6))
    psi = A @ A.T + 4 * np.eye(4)
    b0 = rng.normal(size=(2, 4))
    hp = BspHyperparams(
        b0=b0,
        f_inv=np.zeros((2, 2)),  # c = 0
        psi=psi,
        delta=10.0,
        gauged_idx=np.array([1, 2, 3]),
        ungauged_idx=np.array([0]),
    )
    z = np.array([1.0, 0.5])
    y_g = z @ b0[:, [1, 2, 3]] + np.array([0.6, -0.4, 0.9])
    pt = predictive_distribution(y_g, z, hp)

    mc = conditional_mc(
        np.random.default_rng(99),
        b0,
        hp.f_inv,
        psi,
        hp.delta,
        z,
        hp.gauged_idx,
        hp.ungauged_idx,
        y_g,
        n_retain=200_000,
        eps_frac=0.35,
        batch=1_000_000,
        n_boot=200,
    )
    assert mc["n_retained"] >= 200_000
    assert abs(mc["loc"][0] - pt.mu[0]) <= 3.0 * mc["loc_se"][0]
    for row, prob in zip(range(3), (0.05, 0.5, 0.95)):
        expected = pt.mu[0] + stats.t.ppf(prob, pt.dof) * np.sqrt(pt.scale[0, 0])
        assert abs(mc["quantiles"][row, 0] - expected) <= 3.0 * mc["quantile_se"][row, 0]
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"oracle run took {elapsed:.1f}s"
    _report(1, "predictive law matches rejection-sampled conditional MC")


# ---------------------------------------------------------------------------
# 2. Scalar hand case
# ---------------------------------------------------------------------------

def test_c02_scalar_hand_case():
    hp = BspHyperparams(
        b0=np.zeros((1, 2)),
        f_inv=np.zeros((1, 1)),
        psi=np.array([[2.0, 1.0], [1.0, 2.0]]),
        delta=6.0,
        gauged_idx=np.array([1]),
        ungauged_idx=np.array([0]),
    )
    pt = predictive_distribution(np.array([1.0]), np.array([1.0]), hp)
    assert abs(pt.mu[0] - 0.5) <= 1e-12
    assert abs(pt.d - 1.5) <= 1e-12
    assert abs(pt.dof - 6.0) <= 1e-12
    assert abs(pt.scale[0, 0] - 0.375) <= 1e-12
    _report(2, "scalar hand case exact to 1e-12")


# ---------------------------------------------------------------------------
# 3. Coverage calibration
# ---------------------------------------------------------------------------

def test_c03_coverage_calibration():
    t0 = time.perf_counter()
    covered = total = 0
    for seed in range(20):
        cfg = SynthConfig(p=30, g=20, n=120, delta=40.0, c=0.0, seed=1000 + seed)
        world = synth_generate(cfg)
        hp = BspHyperparams(
            b0=world.b0,
            f_inv=world.f_inv,
            psi=world.psi_true,
            delta=cfg.delta,
            gauged_idx=world.gauged_idx,
            ungauged_idx=world.ungauged_idx,
        )
        for i in range(cfg.n):
            pt = predictive_distribution(
                world.obs.values[i, world.gauged_idx], world.Z[i], hp
            )
            lohi = predict_interval(pt, 0.95)
            truth = world.obs.values[i, world.ungauged_idx]
            covered += int(np.sum((truth >= lohi[:, 0]) & (truth <= lohi[:, 1])))
            total += truth.size
    coverage = covered / total
    assert total >= 2000
    assert 0.93 <= coverage <= 0.97, f"pooled coverage {coverage:.4f}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"calibration took {elapsed:.1f}s"
    _report(3, f"95% intervals cover at {coverage:.3f} over {total} events")


# ---------------------------------------------------------------------------
# 4. Method ordering on a planted nonstationary field
# ---------------------------------------------------------------------------

def _ordering_world(seed):
    cfg = SynthConfig(
        p=48,
        g=32,
        n=300,
        delta=960.0,
        c=0.0,
        seed=seed,
        box_km=420.0,
        phi_km=80.0,
        nugget_frac=0.03,
        warp_strength=2.2,
        warp_scale_km=90.0,
        sd_range=(0.6, 2.2),
        layout="clustered",
        cluster_size=4,
        cluster_sd_km=28.0,
    )
    world = synth_generate(cfg)
    split = SplitSpec(world.split_train_ids, world.split_valid_ids, seed)
    return world, split


def test_c04_method_ordering_across_replicates():
    joint_wins = 0
    rows = []
    for seed in range(20):
        world, split = _ordering_world(seed)
        prepared = prepare_trend(world.obs, world.stations, split, "interaction")
        fit = fit_bsp(prepared)
        bayes_metrics = predict_bsp(fit).metrics
        ok_metrics = run_kriging(prepared).metrics
        win = (
            bayes_metrics.overall_mspe < ok_metrics.overall_mspe
            and ok_metrics.coverage < bayes_metrics.coverage
        )
        joint_wins += int(win)
        rows.append(
            f"  seed {seed:2d}: mspe {bayes_metrics.overall_mspe:.3f} vs "
            f"{ok_metrics.overall_mspe:.3f}, coverage {bayes_metrics.coverage:.3f} vs "
            f"{ok_metrics.coverage:.3f} -> {'win' if win else 'loss'}"
        )
    print("\n".join(rows))
    assert joint_wins >= 18, f"ordering held in only {joint_wins}/20 replicates"
    _report(4, f"hierarchical route beats kriging in {joint_wins}/20 replicates")


# ---------------------------------------------------------------------------
# 5. Deformation suite
# ---------------------------------------------------------------------------

def test_c05_deformation_suite(rng):
    # (a) stress nonincreasing on 100 random instances
    for seed in range(100):
        r = np.random.default_rng(seed)
        g = int(r.integers(5, 14))
        coords = r.uniform(-50, 50, size=(g, 2))
        corr = np.clip(r.uniform(-0.3, 0.95, size=(g, g)), -1, 1)
        corr = 0.5 * (corr + corr.T)
        np.fill_diagonal(corr, 1.0)
        disp = np.sqrt(2 * (1 - corr))
        np.fill_diagonal(disp, 0.0)
        cfg = mds_embed(DispersionMatrix(disp=disp, corr=corr), coords)
        assert np.all(np.diff(np.asarray(cfg.stress_trace)) <= 1e-14)

    # (b) monotone dispersions embed as a similarity transform
    coords = rng.uniform(-200, 200, size=(15, 2))
    cfg = mds_embed(_disp_from_config(coords), coords)
    assert cfg.stress < 1e-3
    assert procrustes_residual(cfg.coords_d, coords) < 0.01

    # (c) interpolation at lambda = 0
    knots = rng.uniform(-1, 1, size=(20, 2))
    target = knots + 0.3 * rng.normal(size=knots.shape)
    tps0 = fit_tps(knots, target, lam=0.0)
    np.testing.assert_allclose(apply_tps(tps0, knots), target, atol=1e-8)

    # (d) huge lambda reproduces the closed-form affine fit
    tps_inf = fit_tps(knots, target, lam=1e8)
    P = np.column_stack([np.ones(len(knots)), (knots - tps_inf.center) / tps_inf.scale])
    affine = np.linalg.solve(P.T @ P, P.T @ target)
    probe = rng.uniform(-1, 1, size=(50, 2))
    Pp = np.column_stack([np.ones(50), (probe - tps_inf.center) / tps_inf.scale])
    np.testing.assert_allclose(apply_tps(tps_inf, probe), Pp @ affine, atol=1e-4)

    # (e) reflection folds everywhere
    refl = fit_tps(knots, knots * np.array([-1.0, 1.0]), lam=0.0)
    diag = fold_check(refl, ProbeGrid.covering(knots, nx=8, ny=8))
    assert diag.fold_fraction == 1.0
    _report(5, "deformation suite (stress, embedding, spline limits, folding)")


# ---------------------------------------------------------------------------
# 6. Kriging suite
# ---------------------------------------------------------------------------

def test_c06_kriging_suite(rng):
    # weights sum to one and exact interpolation at zero nugget
    locs = rng.uniform(0.0, 250.0, size=(9, 2))
    y = rng.normal(size=9)
    fit0 = MlCovFit(sigma2=1.2, phi=80.0, tau2=0.0, loglik=0.0, converged=True)
    targets = np.vstack([locs[4], rng.uniform(0, 250, size=(5, 2))])
    preds = ordinary_krige(y, locs, targets, fit0)
    for pred in preds:
        assert abs(pred.weights.sum() - 1.0) < 1e-10
    assert preds[0].value == pytest.approx(y[4], abs=1e-8)
    assert preds[0].variance == pytest.approx(0.0, abs=1e-8)

    # 4-site bordered-system oracle at 1e-10
    from scipy.spatial.distance import cdist, pdist, squareform

    locs4 = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 120.0], [90.0, 110.0]])
    y4 = np.array([1.0, 3.0, -2.0, 0.5])
    fit4 = MlCovFit(sigma2=2.0, phi=75.0, tau2=0.3, loglik=0.0, converged=True)
    target = np.array([[40.0, 50.0]])
    pred = ordinary_krige(y4, locs4, target, fit4)[0]
    C = fit4.sigma2 * np.exp(-squareform(pdist(locs4)) / fit4.phi) + fit4.tau2 * np.eye(4)
    c0 = fit4.sigma2 * np.exp(-cdist(locs4, target)[:, 0] / fit4.phi)
    A = np.block([[C, np.ones((4, 1))], [np.ones((1, 4)), np.zeros((1, 1))]])
    sol = np.linalg.solve(A, np.concatenate([c0, [1.0]]))
    np.testing.assert_allclose(pred.weights, sol[:4], atol=1e-10)
    assert pred.value == pytest.approx(float(sol[:4] @ y4), abs=1e-10)

    # ML medians within 25% over 200 replicates at g = 50
    truth = dict(sigma2=2.0, phi=100.0, tau2=0.5)
    net_rng = np.random.default_rng(7)
    network = clustered_network(net_rng)
    est = {k: [] for k in truth}
    for _ in range(200):
        field = sim_field(net_rng, network, **truth)
        ml = fit_ml_exponential(field, network)
        est["sigma2"].append(ml.sigma2)
        est["phi"].append(ml.phi)
        est["tau2"].append(ml.tau2)
    for key, val in truth.items():
        med = float(np.median(est[key]))
        assert abs(med - val) <= 0.25 * val, f"{key}: median {med} vs planted {val}"
    _report(6, "kriging suite (weights, interpolation, oracle, ML recovery)")


# ---------------------------------------------------------------------------
# 7. Variogram suite
# ---------------------------------------------------------------------------

def test_c07_variogram_suite(rng):
    # white-noise semivariance estimates the variance in every bin
    locs = rng.uniform(0.0, 100.0, size=(10, 2))
    acc = np.zeros(4)
    cnt = np.zeros(4)
    for _ in range(3000):
        bv = empirical_semivariogram(rng.standard_normal(10), locs, n_bins=4)
        filled = bv.pair_counts > 0
        acc[filled] += bv.gamma_hat[filled]
        cnt[filled] += 1
    np.testing.assert_allclose(acc / cnt, 1.0, atol=0.05)

    # envelope contains white-noise curves in at least 95% of bins
    inside = total = 0
    for seed in range(100):
        r = np.random.default_rng(seed)
        pts = r.uniform(0.0, 100.0, size=(14, 2))
        v = r.standard_normal(14)
        bv = semivariogram_with_envelope(v, pts, n_bins=5, n_perm=99, seed=seed)
        filled = bv.pair_counts > 0
        ok = (bv.gamma_hat[filled] >= bv.envelope_low[filled]) & (
            bv.gamma_hat[filled] <= bv.envelope_high[filled]
        )
        inside += int(ok.sum())
        total += int(filled.sum())
    assert inside / total >= 0.95

    # exponential fit within 1e-4 of the dense grid-search oracle objective
    h = np.linspace(5.0, 400.0, 40)
    gamma = 0.5 + 2.0 * (1.0 - np.exp(-h / 100.0))
    w = np.ones_like(h)
    fit = fit_exponential_variogram(h, gamma, w)
    oracle_best, _ = _oracle_grid_search(
        h,
        gamma,
        w,
        np.linspace(0.0, 1.5, 31),
        np.linspace(0.5, 4.0, 36),
        np.geomspace(10.0, 1000.0, 40),
    )
    assert fit.objective <= oracle_best + 1e-4
    _report(7, "variogram suite (white noise, envelopes, exponential fit)")


# ---------------------------------------------------------------------------
# 8. Trend suite
# ---------------------------------------------------------------------------

def test_c08_trend_suite(rng):
    table = random_station_table(9, rng)
    days = JAN_JUN_DAYS
    spec = TrendSpec.for_data("interaction", table, days)
    X, labels = build_design(table, days, spec)

    # exact recovery of noiseless planted coefficients
    planted = rng.normal(size=X.shape[1])
    y = (X @ planted).reshape(len(days), len(table))
    model = fit_ols(make_obs(y, times=days), X, labels, spec)
    np.testing.assert_allclose(model.coeffs, planted, atol=1e-8)

    # residual orthogonality on a noisy fit
    y_noisy = rng.normal(size=(len(days), len(table)))
    noisy = fit_ols(make_obs(y_noisy, times=days), X, labels, spec)
    scale = np.abs(y_noisy).max() * X.shape[0]
    assert np.abs(X.T @ noisy.residuals.ravel()).max() < 1e-8 * scale

    # site-evaluated coefficient matrix agrees with direct mean evaluation
    b0 = build_b0(model, table)
    coords = table.proj_coords()
    lon = spec.standardize("long", coords[:, 0])
    lat = spec.standardize("lat", coords[:, 1])
    elev = spec.standardize("elev", table.elevations())
    for j in range(len(table)):
        base = _mean_oracle(model.coeffs, model.labels, lon[j], lat[j], elev[j], 1)
        assert b0[0, j] == pytest.approx(base, abs=1e-10)
        for r_i, m in enumerate(range(2, 7), start=1):
            mu = _mean_oracle(model.coeffs, model.labels, lon[j], lat[j], elev[j], m)
            assert b0[r_i, j] == pytest.approx(mu - base, abs=1e-10)
    _report(8, "trend suite (exact recovery, orthogonality, prior-mean matrix)")


# ---------------------------------------------------------------------------
# 9. End-to-end determinism of the batch front end
# ---------------------------------------------------------------------------

def test_c09_cli_determinism(tmp_path):
    from stfield.cli import main

    (tmp_path / "run.toml").write_text(
        """
stations_path = "data/stations.csv"
observations_path = "data/observations.csv"
output_dir = "out"
n_train = 14
split_seed = 3
sim_p = 20
sim_g = 14
sim_n_days = 30
sim_seed = 21
sim_delta = 50.0
sim_warp_strength = 1.0
""",
        encoding="utf-8",
    )
    conf = str(tmp_path / "run.toml")
    assert main(["simulate", conf, "--output-dir", str(tmp_path / "data")]) == 0
    assert main(["pipeline", conf]) == 0
    out = tmp_path / "out"
    snapshot = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert snapshot
    assert main(["pipeline", conf]) == 0
    for name, payload in snapshot.items():
        assert (out / name).read_bytes() == payload, f"{name} changed between runs"
    _report(9, "pipeline reruns produce byte-identical CSVs")


# ---------------------------------------------------------------------------
# 10. Full study-scale synthetic pipeline runtime
# ---------------------------------------------------------------------------

def test_c10_study_scale_runtime():
    t0 = time.perf_counter()
    cfg = SynthConfig(
        p=97,
        g=64,
        n=182,
        delta=2000.0,
        c=0.0,
        seed=4,
        box_km=600.0,
        phi_km=150.0,
        nugget_frac=0.05,
        warp_strength=1.0,
        warp_scale_km=150.0,
    )
    world = synth_generate(cfg)
    split = SplitSpec(world.split_train_ids, world.split_valid_ids, cfg.seed)
    prepared = prepare_trend(world.obs, world.stations, split, "interaction")
    fit = fit_bsp(prepared)
    out = predict_bsp(fit)
    elapsed = time.perf_counter() - t0
    assert out.metrics.n_events == 33 * 182
    assert out.metrics.coverage > 0.8
    assert elapsed < 120.0, f"study-scale pipeline took {elapsed:.1f}s"
    _report(10, f"97-station, 182-day pipeline in {elapsed:.1f}s")
