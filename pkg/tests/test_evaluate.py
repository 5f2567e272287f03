import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stfield.errors import DataError
from stfield.evaluate import (
    MetricsReport,
    PredictionRecord,
    SynthConfig,
    compare_methods,
    evaluate,
    grid_surface,
    planted_warp,
    synth_generate,
)

from conftest import make_obs, make_station_table, make_times

D1, D2 = dt.date(2000, 1, 1), dt.date(2000, 1, 2)


def recs_for(truth, offsets=0.0, width=1.0):
    offsets = np.broadcast_to(offsets, truth.values.shape)
    out = []
    for i, t in enumerate(truth.times):
        for j, sid in enumerate(truth.station_ids):
            if truth.mask[i, j]:
                continue
            point = truth.values[i, j] + offsets[i, j]
            out.append(
                PredictionRecord(sid, t, point, point - width, point + width)
            )
    return out


def test_perfect_predictions():
    truth = make_obs([[1.0, 2.0], [3.0, 4.0]])
    rep = evaluate(recs_for(truth), truth)
    assert rep.overall_mspe == 0.0
    assert rep.coverage == 1.0
    assert rep.n_events == 4


def test_constant_offset_mspe():
    truth = make_obs([[1.0, 2.0], [3.0, 4.0]])
    rep = evaluate(recs_for(truth, offsets=2.0, width=0.5), truth)
    assert rep.overall_mspe == pytest.approx(4.0)
    assert rep.coverage == 0.0


def test_hand_dataset_by_station_and_time():
    truth = make_obs([[0.0, 0.0], [0.0, 0.0]], ids=("A", "B"))
    offsets = np.array([[1.0, 2.0], [3.0, 4.0]])
    rep = evaluate(recs_for(truth, offsets=offsets, width=2.5), truth)
    assert rep.overall_mspe == pytest.approx(7.5)
    assert rep.mspe_by_station["A"] == pytest.approx(5.0)
    assert rep.mspe_by_station["B"] == pytest.approx(10.0)
    assert rep.mspe_by_time[D1] == pytest.approx(2.5)
    assert rep.mspe_by_time[D2] == pytest.approx(12.5)
    assert rep.overall_mspe_se == pytest.approx(2.5)
    # intervals of half-width 2.5 cover errors 1 and 2 only
    assert rep.coverage == pytest.approx(0.5)


def test_overall_is_weighted_station_mean():
    values = np.array([[1.0, 2.0], [3.0, np.nan], [5.0, 6.0]])
    truth = make_obs(values)
    rng = np.random.default_rng(3)
    offsets = rng.normal(size=values.shape)
    rep = evaluate(recs_for(truth, offsets=offsets), truth)
    counts = {sid: int((~truth.mask[:, j]).sum()) for j, sid in enumerate(truth.station_ids)}
    weighted = sum(rep.mspe_by_station[s] * counts[s] for s in counts) / sum(
        counts.values()
    )
    assert rep.overall_mspe == pytest.approx(weighted, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_evaluate_invariant_to_record_order(seed):
    rng = np.random.default_rng(seed)
    truth = make_obs(rng.normal(size=(3, 4)))
    recs = recs_for(truth, offsets=rng.normal(size=(3, 4)))
    rep_a = evaluate(recs, truth)
    order = rng.permutation(len(recs))
    rep_b = evaluate([recs[i] for i in order], truth)
    assert rep_a == rep_b


def test_evaluate_misalignment_errors():
    truth = make_obs([[1.0, 2.0]])
    recs = recs_for(truth)
    with pytest.raises(DataError, match="unknown cell"):
        evaluate(recs + [PredictionRecord("ZZ", D1, 0, -1, 1)], truth)
    with pytest.raises(DataError, match="duplicate"):
        evaluate(recs + [recs[0]], truth)
    with pytest.raises(DataError, match="no prediction"):
        evaluate(recs[:-1], truth)


def _report(label, cov, mspe, se):
    return MetricsReport(
        method_label=label,
        mspe_by_station={},
        mspe_by_time={},
        overall_mspe=mspe,
        overall_mspe_se=se,
        coverage=cov,
        level=0.95,
        n_events=100,
    )


def test_compare_methods_reference_layout():
    # the three-method comparison renders coverage / MSPE / MSPE-se rows
    table = compare_methods(
        [
            _report("hierarchical", 0.918, 5.396, 2.362),
            _report("with normals", 0.921, 7.000, 3.733),
            _report("ordinary kriging", 0.529, 14.032, 5.823),
        ]
    )
    text = table.to_text()
    lines = text.splitlines()
    assert lines[0].split() == ["hierarchical", "with", "normals", "ordinary", "kriging"]
    assert "0.918" in lines[1] and "0.921" in lines[1] and "0.529" in lines[1]
    assert "5.396" in lines[2] and "7.000" in lines[2] and "14.032" in lines[2]
    assert "2.362" in lines[3] and "3.733" in lines[3] and "5.823" in lines[3]
    assert table.best_mspe_label == "hierarchical"


def test_compare_methods_identical_reports():
    table = compare_methods([_report("a", 0.9, 1.0, 0.1), _report("b", 0.9, 1.0, 0.1)])
    assert table.coverage[0] == table.coverage[1]
    assert table.overall_mspe[0] == table.overall_mspe[1]


# ---------------------------------------------------------------------------
# synth_generate
# ---------------------------------------------------------------------------

def test_synth_degenerate_prior_fixes_coefficients():
    cfg = SynthConfig(p=6, g=4, n=10, delta=12.0, c=0.0, seed=5)
    world = synth_generate(cfg)
    np.testing.assert_array_equal(world.B, world.b0)
    np.testing.assert_array_equal(world.f_inv, 0.0)


def test_synth_residual_covariance_matches_iw_mean():
    # inverse-Wishart mean identity: E[Sigma] = psi_true / (delta - p - 1);
    # a huge delta pins the realised Sigma to that mean, and many days pin
    # the sample covariance to the realised Sigma
    cfg = SynthConfig(p=4, g=2, n=10_000, delta=3000.0, c=0.0, seed=11)
    world = synth_generate(cfg)
    resid = world.obs.values - world.Z @ world.B
    s = np.cov(resid, rowvar=False)
    expected = world.psi_true / (cfg.delta - cfg.p - 1)
    rel = np.linalg.norm(s - expected) / np.linalg.norm(expected)
    assert rel < 0.05


def test_synth_deterministic_given_seed():
    a = synth_generate(SynthConfig(p=5, g=3, n=8, delta=10.0, seed=42))
    b = synth_generate(SynthConfig(p=5, g=3, n=8, delta=10.0, seed=42))
    np.testing.assert_array_equal(a.obs.values, b.obs.values)
    np.testing.assert_array_equal(a.sigma, b.sigma)
    c = synth_generate(SynthConfig(p=5, g=3, n=8, delta=10.0, seed=43))
    assert not np.array_equal(a.obs.values, c.obs.values)


def test_synth_truth_record_replays_pipeline_inputs():
    cfg = SynthConfig(p=8, g=5, n=400, delta=60.0, c=0.5, seed=9)
    world = synth_generate(cfg)
    resid = world.obs.values - world.Z @ world.B
    s = np.cov(resid, rowvar=False)
    rel = np.linalg.norm(s - world.sigma) / np.linalg.norm(world.sigma)
    assert rel < 0.25  # sample covariance tracks the recorded Sigma draw
    assert set(world.split_train_ids) | set(world.split_valid_ids) == set(
        world.stations.ids
    )
    assert len(world.split_train_ids) == cfg.g


def test_synth_warp_is_fold_free_and_active():
    cfg = SynthConfig(p=10, g=6, n=5, delta=14.0, warp_strength=1.5, seed=2)
    world = synth_generate(cfg)
    assert not np.allclose(world.coords_true_d, world.stations.proj_coords())
    # tanh warp derivative 1 + s*sech^2 > 0: strictly monotone per axis
    xs = np.linspace(-300, 300, 101)
    warped = planted_warp(np.column_stack([xs, xs]), 1.5, 120.0)
    assert np.all(np.diff(warped[:, 0]) > 0)


# ---------------------------------------------------------------------------
# grid_surface
# ---------------------------------------------------------------------------

def test_grid_surface_constant_inside_hull(rng):
    table = make_station_table(rng.uniform(-50, 50, size=(8, 2)))
    surf = grid_surface(np.full(8, 3.3), table, nx=15, ny=15)
    inside = ~np.isnan(surf.values)
    assert inside.any()
    np.testing.assert_allclose(surf.values[inside], 3.3, atol=1e-12)


def test_grid_surface_reproduces_plane(rng):
    table = make_station_table(rng.uniform(-50, 50, size=(10, 2)))
    coords = table.proj_coords()
    v = 1.0 + 0.3 * coords[:, 0] - 0.7 * coords[:, 1]
    surf = grid_surface(v, table, nx=12, ny=12)
    gx, gy = np.meshgrid(surf.xs, surf.ys)
    expected = 1.0 + 0.3 * gx - 0.7 * gy
    inside = ~np.isnan(surf.values)
    np.testing.assert_allclose(surf.values[inside], expected[inside], atol=1e-9)


def test_grid_surface_square_matches_barycentric_oracle(rng):
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    table = make_station_table(coords)
    v = np.array([0.0, 0.0, 0.0, 1.0])  # one elevated corner
    surf = grid_surface(v, table, nx=9, ny=9)

    from scipy.spatial import Delaunay

    tri = Delaunay(coords)

    def barycentric_oracle(x, y):
        s = tri.find_simplex(np.array([[x, y]]))[0]
        if s < 0:
            return np.nan
        verts = tri.simplices[s]
        A = np.vstack([coords[verts].T, np.ones(3)])
        lam = np.linalg.solve(A, np.array([x, y, 1.0]))
        return float(lam @ v[verts])

    gx, gy = np.meshgrid(surf.xs, surf.ys)
    for i in range(0, 9, 2):
        for j in range(0, 9, 2):
            expected = barycentric_oracle(gx[i, j], gy[i, j])
            got = surf.values[i, j]
            if np.isnan(expected):
                continue
            assert got == pytest.approx(expected, abs=1e-10)


def test_grid_surface_collinear_rejected():
    xs = np.linspace(0, 1, 5)
    table = make_station_table(np.column_stack([xs, 2 * xs]))
    with pytest.raises(DataError, match="collinear"):
        grid_surface(np.zeros(5), table)
