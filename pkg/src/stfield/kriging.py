"""Ordinary kriging with per-day maximum-likelihood exponential covariance.

The covariance model is ``sigma2 * exp(-h / phi) + tau2 * 1{h = 0}`` with a
constant unknown mean. Fitting profiles the likelihood: for fixed range
``phi`` and noise-to-signal ratio ``kappa = tau2 / sigma2`` the mean and
``sigma2`` have closed forms, so the search runs over a log-spaced ``phi``
grid with a bounded inner optimisation of ``kappa``, followed by a joint
polish that only ever improves the grid optimum.

Kriging predicts the noise-free field: the right-hand-side covariances
carry no nugget, so predictions interpolate exactly only when ``tau2 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import optimize
from scipy.spatial.distance import cdist, pdist, squareform

from stfield.errors import DataError, NumericalError

PHI_GRID_SIZE = 25
PHI_GRID_SPAN = (0.01, 2.0)  # fractions of the maximum inter-site distance
KAPPA_MAX = 100.0


@dataclass(frozen=True)
class MlCovFit:
    """Maximum-likelihood exponential covariance parameters for one day."""

    sigma2: float
    phi: float
    tau2: float
    loglik: float
    converged: bool
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.sigma2 <= 0 or self.phi <= 0 or self.tau2 < 0:
            raise DataError(
                f"invalid covariance parameters: sigma2={self.sigma2}, "
                f"phi={self.phi}, tau2={self.tau2}"
            )


@dataclass(frozen=True)
class OkPrediction:
    """Kriging value, variance and the weights that produced them."""

    value: float
    variance: float
    weights: np.ndarray

    def __post_init__(self) -> None:
        if abs(self.weights.sum() - 1.0) > 1e-8:
            raise NumericalError(
                f"kriging weights sum to {self.weights.sum()}, not 1"
            )
        if self.variance < 0:
            raise NumericalError(f"negative kriging variance: {self.variance}")


def _profile_loglik(h: np.ndarray, y: np.ndarray, phi: float, kappa: float) -> float:
    """Gaussian log likelihood with mean and sigma2 profiled out."""
    g = y.size
    V = np.exp(-h / phi) + kappa * np.eye(g)
    try:
        cho = scipy.linalg.cho_factor(V)
    except scipy.linalg.LinAlgError:
        return -np.inf
    ones = np.ones(g)
    vi_y = scipy.linalg.cho_solve(cho, y)
    vi_1 = scipy.linalg.cho_solve(cho, ones)
    denom = float(ones @ vi_1)
    if denom <= 0:
        return -np.inf
    mean = float(ones @ vi_y) / denom
    resid = y - mean
    quad = float(resid @ scipy.linalg.cho_solve(cho, resid))
    if quad <= 0:
        return -np.inf
    sigma2 = quad / g
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return -0.5 * g * (np.log(2.0 * np.pi * sigma2) + 1.0) - 0.5 * logdet


def _closed_form_at(h, y, phi, kappa):
    g = y.size
    V = np.exp(-h / phi) + kappa * np.eye(g)
    cho = scipy.linalg.cho_factor(V)
    ones = np.ones(g)
    vi_y = scipy.linalg.cho_solve(cho, y)
    vi_1 = scipy.linalg.cho_solve(cho, ones)
    mean = float(ones @ vi_y) / float(ones @ vi_1)
    resid = y - mean
    sigma2 = float(resid @ scipy.linalg.cho_solve(cho, resid)) / g
    return mean, sigma2


def fit_ml_exponential(values_t, locations, phi_grid=None) -> MlCovFit:
    """Per-day ML fit of the exponential-plus-nugget covariance.

    Parameters
    ----------
    values_t : (g,) array
        One day's values at the gauged sites.
    locations : (g, 2) array
        Projected coordinates in km.
    phi_grid : array, optional
        Range starts; defaults to 25 log-spaced values spanning 1%-200%
        of the maximum inter-site distance.
    """
    y = np.asarray(values_t, dtype=float)
    locs = np.asarray(locations, dtype=float)
    g = y.size
    if g < 5:
        raise DataError(f"need at least 5 gauged sites; got {g}")
    if locs.shape != (g, 2):
        raise DataError(f"locations must be ({g}, 2); got {locs.shape}")
    h = squareform(pdist(locs))
    hmax = float(h.max())
    if hmax <= 0:
        raise DataError("all sites coincide")
    if phi_grid is None:
        phi_grid = np.geomspace(PHI_GRID_SPAN[0] * hmax, PHI_GRID_SPAN[1] * hmax, PHI_GRID_SIZE)

    best = (-np.inf, None, None)
    for phi in phi_grid:
        res = optimize.minimize_scalar(
            lambda kap: -_profile_loglik(h, y, phi, kap),
            bounds=(0.0, KAPPA_MAX),
            method="bounded",
            options={"xatol": 1e-4},
        )
        ll = -float(res.fun)
        if np.isfinite(ll) and ll > best[0]:
            best = (ll, float(phi), float(res.x))
    if best[1] is None:
        raise NumericalError("non-finite likelihood at every range start")

    ll0, phi0, kappa0 = best
    polish = optimize.minimize(
        lambda v: -_profile_loglik(h, y, float(np.exp(v[0])), float(v[1])),
        x0=np.array([np.log(phi0), kappa0]),
        method="L-BFGS-B",
        bounds=[(np.log(phi_grid[0] * 0.5), np.log(phi_grid[-1] * 2.0)), (0.0, KAPPA_MAX)],
    )
    converged = bool(polish.success)
    if np.isfinite(polish.fun) and -float(polish.fun) > ll0:
        loglik = -float(polish.fun)
        phi = float(np.exp(polish.x[0]))
        kappa = float(polish.x[1])
    else:
        loglik, phi, kappa = ll0, phi0, kappa0

    mean, sigma2 = _closed_form_at(h, y, phi, kappa)
    flags = []
    if phi <= phi_grid[0] * 1.01:
        flags.append("phi_at_lower_bound")
    if phi >= phi_grid[-1] * 1.99:
        flags.append("phi_at_upper_bound")
    if kappa * sigma2 > 3.0 * sigma2:
        flags.append("nugget_dominated")
    if sigma2 <= 0:
        raise NumericalError("nonpositive profiled variance")
    return MlCovFit(
        sigma2=sigma2,
        phi=phi,
        tau2=kappa * sigma2,
        loglik=loglik,
        converged=converged,
        flags=tuple(flags),
    )


def ordinary_krige(values_t, locations, targets, fit: MlCovFit) -> list[OkPrediction]:
    """Solve the bordered ordinary-kriging system per target point.

    Weights satisfy the unbiasedness constraint (sum to one); the returned
    variance is the kriging variance of the noise-free field value.
    """
    y = np.asarray(values_t, dtype=float)
    locs = np.asarray(locations, dtype=float)
    tgts = np.atleast_2d(np.asarray(targets, dtype=float))
    g = y.size
    if locs.shape != (g, 2):
        raise DataError(f"locations must be ({g}, 2); got {locs.shape}")

    h = squareform(pdist(locs))
    if g > 1 and np.min(h[np.triu_indices(g, k=1)]) <= 0:
        raise DataError("duplicate gauged locations make the kriging matrix singular")
    C = fit.sigma2 * np.exp(-h / fit.phi) + fit.tau2 * np.eye(g)
    A = np.zeros((g + 1, g + 1))
    A[:g, :g] = C
    A[:g, g] = 1.0
    A[g, :g] = 1.0
    try:
        lu = scipy.linalg.lu_factor(A)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"singular kriging matrix: {exc}") from None

    h0 = cdist(locs, tgts)
    out = []
    for j in range(tgts.shape[0]):
        c0 = fit.sigma2 * np.exp(-h0[:, j] / fit.phi)
        rhs = np.concatenate([c0, [1.0]])
        sol = scipy.linalg.lu_solve(lu, rhs)
        w, lagrange = sol[:g], sol[g]
        variance = float(fit.sigma2 - w @ c0 - lagrange)
        if variance < -1e-8 * max(fit.sigma2, 1.0):
            raise NumericalError(f"kriging variance {variance} < 0")
        out.append(
            OkPrediction(
                value=float(w @ y),
                variance=max(variance, 0.0),
                weights=w,
            )
        )
    return out
