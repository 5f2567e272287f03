"""Space deformation for nonstationary residual covariance.

The residual field is made approximately stationary by warping the
geographic plane (G-space) into a dispersion plane (D-space):

1. pairwise dispersions ``d_ij = sqrt(2 (1 - corr_ij))`` are computed from
   standardised residual correlations;
2. a nonmetric multidimensional scaling step embeds the gauged sites so
   that D-space distances are, as nearly as possible, a monotone function
   of the dispersions (normalised stress criterion, pool-adjacent-violators
   inner solver, majorisation-style configuration updates with step
   halving so the stress never increases);
3. a smoothing thin-plate spline extends the site map to the whole plane;
   fold and stretch diagnostics of its Jacobian guide the choice of the
   smoothing parameter;
4. an exponential variogram fitted in D-space, together with interpolated
   site standard deviations, yields a full covariance matrix over gauged
   and ungauged sites.

Thin-plate-spline fits normalise the source coordinates to zero mean and
unit RMS radius internally (the normalisation is stored on the map), so a
given smoothing value has the same meaning regardless of the coordinate
units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist, squareform

from stfield.errors import DataError, NumericalError
from stfield.ingest import StationTable
from stfield.variogram import ExpVariogramFit

DEFAULT_LAMBDAS = (0.0, 1.0, 2.0, 5.0, 10.0, 50.0)
EIGENVALUE_FLOOR_FRACTION = 1e-8


@dataclass(frozen=True)
class DispersionMatrix:
    """Observed dispersions and the residual correlation they derive from."""

    disp: np.ndarray
    corr: np.ndarray

    def __post_init__(self) -> None:
        if self.disp.shape != self.corr.shape or self.disp.ndim != 2:
            raise DataError("disp and corr must be square matrices of equal shape")
        if np.abs(np.diag(self.disp)).max(initial=0.0) > 1e-12:
            raise DataError("dispersion diagonal must be zero")


@dataclass(frozen=True)
class DSpaceConfig:
    """Embedded D-space coordinates with the final stress and monotone fit."""

    coords_d: np.ndarray
    stress: float
    disp_sorted: np.ndarray
    h_sorted: np.ndarray
    delta_fitted: np.ndarray
    stress_trace: tuple[float, ...]

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.coords_d)):
            raise NumericalError("non-finite D-space coordinates")
        if self.stress < 0:
            raise NumericalError(f"negative stress: {self.stress}")


@dataclass(frozen=True)
class TpsMap:
    """Fitted smoothing thin-plate-spline map R^2 -> R^2.

    ``affine`` rows are per output dimension: [a0, ax, ay] acting on the
    normalised source coordinates ``(x - center) / scale``.
    """

    lam: float
    affine: np.ndarray  # 2 x 3
    weights: np.ndarray  # g x 2
    knots: np.ndarray  # g x 2 (original source units)
    center: np.ndarray  # (2,)
    scale: float


@dataclass(frozen=True)
class ProbeGrid:
    """Rectangular probe lattice used for Jacobian diagnostics."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int = 20
    ny: int = 20

    @classmethod
    def covering(cls, points: np.ndarray, nx: int = 20, ny: int = 20) -> "ProbeGrid":
        points = np.asarray(points, dtype=float)
        return cls(
            float(points[:, 0].min()),
            float(points[:, 0].max()),
            float(points[:, 1].min()),
            float(points[:, 1].max()),
            nx,
            ny,
        )


@dataclass(frozen=True)
class DeformDiagnostics:
    """Per-probe-cell Jacobian determinants and singular values."""

    cell_x: np.ndarray
    cell_y: np.ndarray
    jac_det: np.ndarray
    singular_values: np.ndarray  # m x 2
    fold_fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fold_fraction <= 1.0:
            raise NumericalError(f"fold_fraction out of range: {self.fold_fraction}")


@dataclass(frozen=True)
class LambdaSelection:
    """Smoothing-parameter selection report."""

    chosen: float
    rows: tuple[tuple[float, float, float], ...]  # (lambda, fold_fraction, knot_rmse)
    maps: tuple[TpsMap, ...]
    warning: bool


@dataclass(frozen=True)
class CovarianceExtension:
    """Covariance over all sites plus the pieces it was assembled from."""

    psi: np.ndarray
    correlation: np.ndarray
    sd: np.ndarray
    floored: bool


# ---------------------------------------------------------------------------
# Dispersions
# ---------------------------------------------------------------------------

def dispersion_matrix(residuals: np.ndarray) -> DispersionMatrix:
    """Dispersions ``sqrt(2 (1 - corr))`` of residual columns.

    ``residuals`` is an (n x g) matrix of de-trended values, one column per
    gauged site; every column must have positive variance and n >= 3.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 2 or r.shape[0] < 3:
        raise DataError("residual matrix must be (n >= 3) x g")
    sd = r.std(axis=0, ddof=1)
    tol = 1e-10 * np.maximum(np.abs(r).max(axis=0), 1.0)
    dead = np.flatnonzero(sd <= tol)
    if dead.size:
        raise DataError(f"zero-variance residual column(s): {dead.tolist()}")
    corr = np.corrcoef(r, rowvar=False)
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    disp = np.sqrt(np.maximum(2.0 * (1.0 - corr), 0.0))
    np.fill_diagonal(disp, 0.0)
    return DispersionMatrix(disp=disp, corr=corr)


# ---------------------------------------------------------------------------
# Isotonic regression (pool adjacent violators)
# ---------------------------------------------------------------------------

def isotonic_regression(x, y, weights=None) -> np.ndarray:
    """Weighted least-squares monotone nondecreasing fit.

    ``x`` must already be sorted ascending; it only anchors the ordering.
    Returns the fitted values, the exact minimiser of
    ``sum w (y - fit)^2`` over nondecreasing sequences.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("x and y must be 1-D arrays of equal length")
    if np.any(np.diff(x) < 0):
        raise DataError("x must be sorted ascending")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or np.any(w <= 0):
        raise DataError("weights must be positive and match y")

    # stack of blocks: (weight sum, weighted mean, count)
    means: list[float] = []
    wsums: list[float] = []
    counts: list[int] = []
    for wi, yi in zip(w, y):
        means.append(float(yi))
        wsums.append(float(wi))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1] + 0.0:
            m2, w2, c2 = means.pop(), wsums.pop(), counts.pop()
            m1, w1, c1 = means.pop(), wsums.pop(), counts.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wsums.append(wt)
            counts.append(c1 + c2)
    return np.repeat(np.asarray(means), np.asarray(counts))


# ---------------------------------------------------------------------------
# Nonmetric multidimensional scaling
# ---------------------------------------------------------------------------

def _condensed(matrix: np.ndarray) -> np.ndarray:
    iu, ju = np.triu_indices(matrix.shape[0], k=1)
    return matrix[iu, ju]


def _stress_parts(coords: np.ndarray, order: np.ndarray, disp_sorted: np.ndarray):
    """Distances, isotonic disparities and normalised stress for a config."""
    h = pdist(coords)
    h_sorted = h[order]
    delta = isotonic_regression(disp_sorted, h_sorted)
    denom = float(h @ h)
    if denom <= 0 or not np.isfinite(denom):
        return h, delta, np.inf
    stress = float(np.sum((delta - h_sorted) ** 2) / denom)
    return h, delta, stress


def mds_embed(
    disp: DispersionMatrix,
    init: np.ndarray,
    max_iter: int = 500,
    tol: float = 1e-10,
) -> DSpaceConfig:
    """Nonmetric MDS of the dispersion matrix starting from site coordinates.

    The initial configuration (normally the geographic coordinates) is
    rescaled to unit RMS inter-point distance. Each iteration runs the
    isotonic inner fit, then a majorisation configuration update with step
    halving on stress increase, so the recorded stress trace is
    nonincreasing. Stops when the relative stress improvement drops below
    ``tol`` or after ``max_iter`` iterations.
    """
    g = disp.disp.shape[0]
    coords = np.asarray(init, dtype=float).copy()
    if coords.shape != (g, 2):
        raise DataError(f"init must be ({g}, 2); got {coords.shape}")
    d_cond = _condensed(disp.disp)
    rms = np.sqrt(np.mean(pdist(coords) ** 2))
    if not rms > 0:
        raise DataError("initial configuration is degenerate (all points coincide)")
    coords /= rms

    # deterministic processing order of pairs by dispersion
    order = np.lexsort((np.arange(d_cond.size), d_cond))
    disp_sorted = d_cond[order]

    h, delta, stress = _stress_parts(coords, order, disp_sorted)
    trace = [stress]
    if not np.isfinite(stress):
        raise NumericalError(f"non-finite stress at initialisation; trace={trace}")

    iu, ju = np.triu_indices(g, k=1)
    for _ in range(max_iter):
        if stress <= 0.0:
            break
        # disparities back in pair order
        delta_pairs = np.empty_like(delta)
        delta_pairs[order] = delta
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(h > 0, delta_pairs / h, 0.0)
        B = np.zeros((g, g))
        B[iu, ju] = -ratio
        B[ju, iu] = -ratio
        np.fill_diagonal(B, -B.sum(axis=1))
        guttman = (B @ coords) / g

        accepted = False
        step = 1.0
        for _ in range(30):
            cand = coords + step * (guttman - coords)
            h_c, delta_c, stress_c = _stress_parts(cand, order, disp_sorted)
            if np.isfinite(stress_c) and stress_c <= stress:
                improved = stress - stress_c
                coords, h, delta, stress = cand, h_c, delta_c, stress_c
                trace.append(stress)
                accepted = improved > tol * max(stress, 1e-300)
                break
            step *= 0.5
        if not accepted:
            break

    if not np.all(np.isfinite(coords)):
        raise NumericalError(
            f"MDS collapsed to a degenerate configuration; stress trace={trace}"
        )
    h_final = pdist(coords)[order]
    return DSpaceConfig(
        coords_d=coords,
        stress=stress,
        disp_sorted=disp_sorted,
        h_sorted=h_final,
        delta_fitted=isotonic_regression(disp_sorted, h_final),
        stress_trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# Thin-plate splines
# ---------------------------------------------------------------------------

def _tps_kernel(r: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r * r * np.log(r)
    return np.where(r > 0, out, 0.0)


def fit_tps(source: np.ndarray, target: np.ndarray, lam: float) -> TpsMap:
    """Fit the smoothing thin-plate spline mapping source onto target.

    At ``lam = 0`` the map interpolates the targets exactly; larger values
    shrink towards the best affine map. Source coordinates are normalised
    internally (stored on the returned map), so ``lam`` is scale-free.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    g = source.shape[0]
    if source.shape != (g, 2) or target.shape != (g, 2):
        raise DataError("source and target must both be (g, 2)")
    if g < 3:
        raise DataError("need at least 3 knots")
    if lam < 0:
        raise DataError(f"lambda must be nonnegative: {lam}")

    center = source.mean(axis=0)
    spread = np.sqrt(np.mean(np.sum((source - center) ** 2, axis=1)))
    if not spread > 0:
        raise NumericalError("collinear knots: all source points coincide")
    src = (source - center) / spread

    P = np.column_stack([np.ones(g), src])
    if np.linalg.matrix_rank(P) < 3:
        raise NumericalError("collinear knots: thin-plate system is singular")
    K = _tps_kernel(squareform(pdist(src)))
    L = np.zeros((g + 3, g + 3))
    L[:g, :g] = K + lam * np.eye(g)
    L[:g, g:] = P
    L[g:, :g] = P.T
    rhs = np.vstack([target, np.zeros((3, 2))])
    try:
        sol = scipy.linalg.solve(L, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"singular thin-plate system: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise NumericalError("thin-plate solve produced non-finite coefficients")
    return TpsMap(
        lam=float(lam),
        affine=sol[g:].T.copy(),
        weights=sol[:g].copy(),
        knots=source.copy(),
        center=center,
        scale=float(spread),
    )


def apply_tps(tps: TpsMap, points: np.ndarray) -> np.ndarray:
    """Evaluate the fitted map at (m x 2) points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    src = (pts - tps.center) / tps.scale
    knots = (tps.knots - tps.center) / tps.scale
    U = _tps_kernel(cdist(src, knots))
    P = np.column_stack([np.ones(src.shape[0]), src])
    return P @ tps.affine.T + U @ tps.weights


def fold_check(tps: TpsMap, probe: ProbeGrid, hull_only: bool = True) -> DeformDiagnostics:
    """Finite-difference Jacobian diagnostics of the map on a probe grid.

    A cell with negative Jacobian determinant is folded; singular values
    above one indicate local expansion, below one contraction. With
    ``hull_only`` (default) only cells whose centres lie inside the convex
    hull of the knots are diagnosed: the spline is pure extrapolation
    outside the hull and its behaviour there is immaterial to the sites.
    """
    xs = np.linspace(probe.x0, probe.x1, probe.nx + 1)
    ys = np.linspace(probe.y0, probe.y1, probe.ny + 1)
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    gx, gy = np.meshgrid(xs, ys)
    corners = apply_tps(tps, np.column_stack([gx.ravel(), gy.ravel()]))
    corners = corners.reshape(probe.ny + 1, probe.nx + 1, 2)

    du_dx = (corners[:-1, 1:, :] - corners[:-1, :-1, :]) / dx
    du_dy = (corners[1:, :-1, :] - corners[:-1, :-1, :]) / dy
    J = np.stack([du_dx, du_dy], axis=-1)  # ny x nx x 2(out) x 2(in)
    J = J.reshape(-1, 2, 2)
    det = np.linalg.det(J)
    svals = np.linalg.svd(J, compute_uv=False)
    cx, cy = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]))
    cx, cy = cx.ravel(), cy.ravel()

    if hull_only and tps.knots.shape[0] >= 3:
        from scipy.spatial import Delaunay, QhullError

        try:
            hull = Delaunay(tps.knots)
            inside = hull.find_simplex(np.column_stack([cx, cy])) >= 0
        except QhullError:
            inside = np.ones(cx.size, dtype=bool)
        if inside.any():
            cx, cy = cx[inside], cy[inside]
            det = det[inside]
            svals = svals[inside]
    return DeformDiagnostics(
        cell_x=cx,
        cell_y=cy,
        jac_det=det,
        singular_values=svals,
        fold_fraction=float(np.mean(det < 0.0)),
    )


def select_lambda(
    source: np.ndarray,
    target: np.ndarray,
    candidates=DEFAULT_LAMBDAS,
    probe: ProbeGrid | None = None,
) -> LambdaSelection:
    """Pick the smallest candidate smoothing value whose map does not fold.

    Reports (lambda, fold_fraction, knot_rmse) per candidate. If every
    candidate folds, the largest one is returned with a warning flag.
    """
    candidates = tuple(float(c) for c in candidates)
    if not candidates:
        raise DataError("need at least one candidate lambda")
    source = np.asarray(source, dtype=float)
    if probe is None:
        probe = ProbeGrid.covering(source)
    rows = []
    maps = []
    for lam in sorted(candidates):
        tps = fit_tps(source, target, lam)
        diag = fold_check(tps, probe)
        rmse = float(np.sqrt(np.mean((apply_tps(tps, source) - target) ** 2)))
        rows.append((lam, diag.fold_fraction, rmse))
        maps.append(tps)
    for (lam, fold, _), tps in zip(rows, maps):
        if fold == 0.0:
            return LambdaSelection(lam, tuple(rows), tuple(maps), warning=False)
    return LambdaSelection(rows[-1][0], tuple(rows), tuple(maps), warning=True)


# ---------------------------------------------------------------------------
# Covariance extension to ungauged sites
# ---------------------------------------------------------------------------

def extend_covariance(
    stations_all: StationTable,
    gauged_idx,
    tps: TpsMap,
    fit: ExpVariogramFit,
    sd_g,
) -> CovarianceExtension:
    """Model-based covariance over all stations from the D-space variogram.

    Correlations come from the fitted exponential variogram evaluated at
    D-space distances, normalised to one at distance zero. Standard
    deviations at ungauged sites are inverse-squared-distance interpolates
    of the gauged ones in D-space. The result is forced symmetric positive
    definite with an eigenvalue floor; flooring is flagged.
    """
    gauged_idx = np.asarray(gauged_idx, dtype=int)
    sd_g = np.asarray(sd_g, dtype=float)
    p = len(stations_all)
    if gauged_idx.size != sd_g.size:
        raise DataError("gauged_idx and sd_g must have equal length")
    if np.any(sd_g <= 0):
        raise DataError("gauged site standard deviations must be positive")

    coords_d = apply_tps(tps, stations_all.proj_coords())
    h = squareform(pdist(coords_d))
    rho = fit.correlation(h)
    np.fill_diagonal(rho, 1.0)

    sd_all = np.empty(p)
    sd_all[gauged_idx] = sd_g
    ungauged = np.setdiff1d(np.arange(p), gauged_idx)
    for j in ungauged:
        dists = np.linalg.norm(coords_d[gauged_idx] - coords_d[j], axis=1)
        nearest = dists.min()
        if nearest < 1e-12:
            sd_all[j] = sd_g[int(np.argmin(dists))]
        else:
            w = 1.0 / dists**2
            sd_all[j] = float(w @ sd_g / w.sum())

    psi = sd_all[:, None] * rho * sd_all[None, :]
    psi = 0.5 * (psi + psi.T)

    eigvals, eigvecs = np.linalg.eigh(psi)
    mean_eig = float(eigvals.mean())
    if not mean_eig > 0:
        raise NumericalError("covariance extension produced a non-positive spectrum")
    floor = EIGENVALUE_FLOOR_FRACTION * mean_eig
    floored = bool(eigvals.min() < floor)
    if floored:
        eigvals = np.maximum(eigvals, floor)
        psi = (eigvecs * eigvals) @ eigvecs.T
        psi = 0.5 * (psi + psi.T)
    if np.linalg.eigvalsh(psi).min() <= 0:
        raise NumericalError("covariance extension not positive definite after flooring")
    return CovarianceExtension(psi=psi, correlation=rho, sd=sd_all, floored=floored)
