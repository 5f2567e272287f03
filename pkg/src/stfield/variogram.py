"""Empirical semivariograms with permutation envelopes and exponential fits.

The empirical estimator for a single field replicate is

    gamma_hat(bin) = (1 / (2 |N(bin)|)) * sum over pairs in bin of (v_k - v_l)^2

with equally spaced bins on [0, max_dist]. Envelope bands are per-bin
min/max of the estimator across random relabelings of the values onto the
locations. The parametric model is

    gamma(h) = nugget + sill * (1 - exp(-h / phi)),

where ``sill`` is the partial sill; the practical range is about 3*phi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.spatial.distance import pdist

from stfield.errors import DataError, NumericalError

DEFAULT_N_PERMUTATIONS = 99


@dataclass(frozen=True)
class BinnedVariogram:
    """Binned semivariances; ``gamma_hat`` is NaN where a bin holds no pair."""

    bin_midpoints: np.ndarray
    gamma_hat: np.ndarray
    pair_counts: np.ndarray
    envelope_low: np.ndarray | None = None
    envelope_high: np.ndarray | None = None

    def __post_init__(self) -> None:
        if np.any(np.diff(self.bin_midpoints) <= 0):
            raise DataError("bin midpoints must be strictly increasing")
        if np.any(self.pair_counts < 0):
            raise DataError("negative pair count")
        filled = self.pair_counts > 0
        if np.any(self.gamma_hat[filled] < 0):
            raise DataError("negative semivariance")


@dataclass(frozen=True)
class ExpVariogramFit:
    """Weighted least-squares exponential variogram fit.

    ``sill`` is the partial sill. ``flags`` collects fit caveats such as
    parameters pinned at their bounds or a flat (range-unidentified) fit.
    """

    nugget: float
    sill: float
    range_phi: float
    objective: float
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.nugget < 0 or self.sill <= 0 or self.range_phi <= 0:
            raise DataError(
                f"invalid variogram parameters: nugget={self.nugget}, "
                f"sill={self.sill}, phi={self.range_phi}"
            )

    def gamma(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        return self.nugget + self.sill * (1.0 - np.exp(-h / self.range_phi))

    def correlation(self, h) -> np.ndarray:
        """Correlation implied by the fit, normalised so rho(0) = 1."""
        h = np.asarray(h, dtype=float)
        total = self.nugget + self.sill
        rho = (self.sill / total) * np.exp(-h / self.range_phi)
        return np.where(h == 0.0, 1.0, rho)


def _pair_arrays(values: np.ndarray, locations: np.ndarray):
    values = np.asarray(values, dtype=float)
    locations = np.asarray(locations, dtype=float)
    if values.ndim != 1 or locations.shape != (values.size, 2):
        raise DataError(
            f"expected values (p,) and locations (p, 2); got {values.shape} "
            f"and {locations.shape}"
        )
    if values.size < 2:
        raise DataError("need at least 2 sites")
    dists = pdist(locations)
    iu, ju = np.triu_indices(values.size, k=1)
    return values, dists, iu, ju


def _bin_edges(n_bins: int, max_dist: float) -> np.ndarray:
    if n_bins < 1:
        raise DataError(f"n_bins must be positive: {n_bins}")
    if not max_dist > 0:
        raise DataError(f"max_dist must be positive: {max_dist}")
    return np.linspace(0.0, max_dist, n_bins + 1)


def default_max_dist(locations: np.ndarray) -> float:
    """Half the maximum inter-site distance."""
    d = pdist(np.asarray(locations, dtype=float))
    if d.size == 0:
        raise DataError("need at least 2 sites")
    return float(d.max()) / 2.0


def _binned_gamma(sq_half: np.ndarray, dists: np.ndarray, edges: np.ndarray):
    idx = np.digitize(dists, edges[1:-1])
    inside = dists <= edges[-1]
    counts = np.bincount(idx[inside], minlength=edges.size - 1)
    sums = np.bincount(idx[inside], weights=sq_half[inside], minlength=edges.size - 1)
    with np.errstate(invalid="ignore"):
        gamma = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return gamma, counts


def empirical_semivariogram(
    values,
    locations,
    n_bins: int = 12,
    max_dist: float | None = None,
) -> BinnedVariogram:
    """Binned empirical semivariogram of one field replicate.

    Parameters
    ----------
    values : (p,) array
        One value per site.
    locations : (p, 2) array
        Projected site coordinates in km.
    n_bins : int
        Number of equal-width distance bins on [0, max_dist].
    max_dist : float, optional
        Largest pair distance considered; defaults to half the maximum
        inter-site distance.

    Returns
    -------
    BinnedVariogram
        Empty bins carry ``pair_counts == 0`` and NaN semivariance.
    """
    values, dists, iu, ju = _pair_arrays(values, locations)
    if max_dist is None:
        max_dist = default_max_dist(locations)
    edges = _bin_edges(n_bins, max_dist)
    if not np.any(dists <= max_dist):
        raise DataError(f"all site pairs lie beyond max_dist={max_dist}")
    sq_half = 0.5 * (values[iu] - values[ju]) ** 2
    gamma, counts = _binned_gamma(sq_half, dists, edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return BinnedVariogram(mids, gamma, counts)


def permutation_envelope(
    values,
    locations,
    n_bins: int = 12,
    max_dist: float | None = None,
    n_perm: int = DEFAULT_N_PERMUTATIONS,
    seed: int = 0,
):
    """Per-bin min/max of the semivariogram over random relabelings.

    Returns ``(low, high)`` arrays over the same bins as
    :func:`empirical_semivariogram`; deterministic given ``seed``.
    """
    if n_perm < 19:
        raise DataError(f"n_perm must be at least 19: {n_perm}")
    values, dists, iu, ju = _pair_arrays(values, locations)
    if max_dist is None:
        max_dist = default_max_dist(locations)
    edges = _bin_edges(n_bins, max_dist)
    rng = np.random.default_rng(seed)
    low = np.full(n_bins, np.inf)
    high = np.full(n_bins, -np.inf)
    for _ in range(n_perm):
        perm = rng.permutation(values.size)
        v = values[perm]
        sq_half = 0.5 * (v[iu] - v[ju]) ** 2
        gamma, counts = _binned_gamma(sq_half, dists, edges)
        filled = counts > 0
        low[filled] = np.minimum(low[filled], gamma[filled])
        high[filled] = np.maximum(high[filled], gamma[filled])
    low[~np.isfinite(low)] = np.nan
    high[~np.isfinite(high)] = np.nan
    return low, high


def semivariogram_with_envelope(
    values,
    locations,
    n_bins: int = 12,
    max_dist: float | None = None,
    n_perm: int = DEFAULT_N_PERMUTATIONS,
    seed: int = 0,
) -> BinnedVariogram:
    """Empirical semivariogram with permutation envelope attached."""
    base = empirical_semivariogram(values, locations, n_bins, max_dist)
    if max_dist is None:
        max_dist = default_max_dist(locations)
    low, high = permutation_envelope(values, locations, n_bins, max_dist, n_perm, seed)
    return BinnedVariogram(
        base.bin_midpoints, base.gamma_hat, base.pair_counts, low, high
    )


def _wls_objective(params, h, g, w):
    nugget, sill, phi = params
    model = nugget + sill * (1.0 - np.exp(-h / phi))
    return float(np.sum(w * (g - model) ** 2))


def fit_exponential_variogram(
    distances,
    dispersions,
    weights=None,
) -> ExpVariogramFit:
    """Fit the exponential model by weighted least squares.

    Parameters
    ----------
    distances, dispersions : arrays of equal length
        Pairs (h, gamma_hat); raw site pairs or bin summaries both work.
    weights : array, optional
        Per-pair weights (pair counts for binned input); default all one.

    Notes
    -----
    Minimises ``sum w * (gamma_hat - gamma_model(h))^2`` with a coarse grid
    scan followed by bounded local polish from the best grid points, so the
    reported objective never exceeds the best grid value. Parameters that
    end up pinned at a bound are flagged, as are flat (range-unidentified)
    inputs.
    """
    h = np.asarray(distances, dtype=float)
    g = np.asarray(dispersions, dtype=float)
    if h.shape != g.shape or h.ndim != 1:
        raise DataError("distances and dispersions must be 1-D arrays of equal length")
    keep = np.isfinite(h) & np.isfinite(g)
    h, g = h[keep], g[keep]
    if weights is None:
        w = np.ones_like(h)
    else:
        w = np.asarray(weights, dtype=float)[keep]
    if np.unique(h[h > 0]).size < 3:
        raise DataError("need at least 3 distinct positive distances")
    if not np.all(h >= 0):
        raise DataError("negative distances")

    gmax = float(g.max(initial=0.0))
    flags: list[str] = []
    scale = max(gmax, 1e-12)
    if np.ptp(g) <= 1e-12 * scale:
        # flat input: range is unidentifiable; report a flat fit
        level = float(np.average(g, weights=w)) if g.size else 0.0
        sill_floor = 1e-10 * scale
        return ExpVariogramFit(
            nugget=max(level - sill_floor, 0.0),
            sill=sill_floor,
            range_phi=float(h[h > 0].mean()),
            objective=_wls_objective(
                (max(level - sill_floor, 0.0), sill_floor, float(h[h > 0].mean())), h, g, w
            ),
            flags=("flat",),
        )

    hmax = float(h.max())
    sill_hi = 2.0 * gmax
    sill_lo = 1e-10 * scale
    phi_lo, phi_hi = hmax * 1e-3, hmax * 10.0
    bounds = [(0.0, gmax), (sill_lo, sill_hi), (phi_lo, phi_hi)]

    # coarse grid scan
    nuggets = np.linspace(0.0, 0.8 * gmax, 5)
    sills = np.linspace(0.1 * gmax, sill_hi, 6)
    phis = np.geomspace(max(phi_lo, hmax * 0.02), hmax * 2.0, 8)
    grid_pts = [
        (n0, s0, p0) for n0 in nuggets for s0 in sills for p0 in phis
    ]
    grid_obj = [_wls_objective(pt, h, g, w) for pt in grid_pts]
    order = np.argsort(grid_obj)

    best_params = np.asarray(grid_pts[order[0]], dtype=float)
    best_obj = grid_obj[order[0]]
    for idx in order[:4]:
        res = optimize.minimize(
            _wls_objective,
            np.asarray(grid_pts[idx], dtype=float),
            args=(h, g, w),
            method="L-BFGS-B",
            bounds=bounds,
        )
        if np.isfinite(res.fun) and res.fun < best_obj:
            best_obj = float(res.fun)
            best_params = res.x
    if not np.isfinite(best_obj):
        raise NumericalError("variogram fit produced non-finite objective")

    nugget, sill, phi = (float(v) for v in best_params)
    for value, (lo, hi), name in zip(best_params, bounds, ("nugget", "sill", "phi")):
        span = hi - lo
        if value <= lo + 1e-9 * span and name != "nugget":
            flags.append(f"{name}_at_lower_bound")
        if value >= hi - 1e-9 * span:
            flags.append(f"{name}_at_upper_bound")
    sill = max(sill, sill_lo)
    phi = min(max(phi, phi_lo), phi_hi)
    return ExpVariogramFit(
        nugget=max(nugget, 0.0),
        sill=sill,
        range_phi=phi,
        objective=best_obj,
        flags=tuple(flags),
    )
