"""Hierarchical Bayesian spatial prediction at ungauged sites.

Model for the n x p response panel Y (days by sites), with Z the n x k
day-level design:

    Y | B, Sigma  ~  matrix normal(Z B, I_n, Sigma)
    B | Sigma     ~  matrix normal(B0, F^-1, Sigma)     F^-1 = c (Z'Z)^-1
    Sigma         ~  inverse Wishart(Psi, delta)        (scipy convention)

Integrating B and Sigma out, the day-t values at the u ungauged sites
given the g gauged ones follow a multivariate t:

    mu_u  = z_t B0_u + Psi_ug Psi_gg^-1 (y_g - z_t B0_g)
    d     = 1 + z_t F^-1 z_t' + (y_g - z_t B0_g) Psi_gg^-1 (y_g - z_t B0_g)'
    scale = d / (delta - u + 1) * (Psi_uu - Psi_ug Psi_gg^-1 Psi_gu)
    dof   = delta - u + 1

The quadratic form in ``d`` uses the gauged innovation and the scalar
``z_t F^-1 z_t'``; a ``literal`` variant with the ungauged coefficient
block in the innovation is kept for comparison and only defined when
u equals g.

Hyperparameters (delta, c) are picked by maximising the exact
matrix-variate-t marginal likelihood of the gauged panel over a grid,
with Psi rescaled per candidate so the implied prior mean of Sigma_gg
matches the residual sample covariance in trace.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats
from scipy.special import gammaln, multigammaln

from stfield.errors import DataError, NumericalError
from stfield.trend import TrendModel

DEFAULT_C_GRID = (0.0, 0.1, 1.0, 10.0)
DELTA_GRID_OFFSETS = (2, 5, 10, 20, 50, 100)


@dataclass(frozen=True)
class BspHyperparams:
    """Assembled hyperparameters with the gauged/ungauged partition."""

    b0: np.ndarray  # k x p
    f_inv: np.ndarray  # k x k
    psi: np.ndarray  # p x p
    delta: float
    gauged_idx: np.ndarray
    ungauged_idx: np.ndarray

    def __post_init__(self) -> None:
        k, p = self.b0.shape
        if self.f_inv.shape != (k, k):
            raise DataError(f"f_inv must be {k}x{k}; got {self.f_inv.shape}")
        if self.psi.shape != (p, p):
            raise DataError(f"psi must be {p}x{p}; got {self.psi.shape}")
        part = np.sort(np.concatenate([self.gauged_idx, self.ungauged_idx]))
        if not np.array_equal(part, np.arange(p)):
            raise DataError("gauged/ungauged indices must partition 0..p-1")
        u = self.ungauged_idx.size
        if not self.delta - u + 1 > 0:
            raise DataError(
                f"improper predictive: delta={self.delta} needs delta - u + 1 > 0 "
                f"with u={u}"
            )

    @property
    def n_gauged(self) -> int:
        return int(self.gauged_idx.size)

    @property
    def n_ungauged(self) -> int:
        return int(self.ungauged_idx.size)


@dataclass(frozen=True)
class PredictiveT:
    """Multivariate-t predictive law at the ungauged sites for one day."""

    mu: np.ndarray
    scale: np.ndarray
    dof: float
    d: float

    def __post_init__(self) -> None:
        if self.dof <= 0:
            raise DataError(f"predictive needs positive dof; got {self.dof}")
        if self.d < 1.0 - 1e-9:
            raise NumericalError(f"inflation factor below one: {self.d}")
        if self.scale.shape != (self.mu.size, self.mu.size):
            raise DataError("scale shape does not match location")


@dataclass(frozen=True)
class AssemblyOptions:
    """Knobs for hyperparameter assembly.

    With ``search`` enabled the (delta, c) grid is scanned; otherwise
    ``delta`` (required) and ``c`` (defaults to 0) are used directly.
    """

    delta_grid: tuple[float, ...] | None = None
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    search: bool = True
    delta: float | None = None
    c: float = 0.0
    rescale_psi: bool = True


@dataclass(frozen=True)
class AssemblyReport:
    """Grid-search log: one row per (delta, c) with its score or skip reason."""

    rows: tuple[tuple[float, float, float | None, str], ...]
    chosen_delta: float
    chosen_c: float
    psi_scale: float


def _cho(mat: np.ndarray, what: str):
    try:
        return scipy.linalg.cho_factor(0.5 * (mat + mat.T))
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is numerically singular or not PD: {exc}") from None


def predictive_distribution(
    y_g: np.ndarray,
    z_t: np.ndarray,
    hp: BspHyperparams,
    d_formula: str = "corrected",
) -> PredictiveT:
    """Closed-form predictive law of the ungauged sites for one day.

    ``d_formula`` selects the inflation-factor variant: ``corrected``
    (default, gauged innovation) or ``literal`` (ungauged coefficient
    block in the innovation; requires u == g).
    """
    if d_formula not in ("corrected", "literal"):
        raise DataError(f"unknown d_formula: {d_formula}")
    y_g = np.asarray(y_g, dtype=float)
    z_t = np.asarray(z_t, dtype=float)
    g_idx, u_idx = hp.gauged_idx, hp.ungauged_idx
    if y_g.shape != (g_idx.size,):
        raise DataError(f"y_g must have length {g_idx.size}; got {y_g.shape}")
    if z_t.shape != (hp.b0.shape[0],):
        raise DataError(f"z_t must have length {hp.b0.shape[0]}; got {z_t.shape}")

    b0_g = hp.b0[:, g_idx]
    b0_u = hp.b0[:, u_idx]
    psi_gg = hp.psi[np.ix_(g_idx, g_idx)]
    psi_ug = hp.psi[np.ix_(u_idx, g_idx)]
    psi_uu = hp.psi[np.ix_(u_idx, u_idx)]

    cho_gg = _cho(psi_gg, "Psi_gg")
    innov = y_g - z_t @ b0_g
    alpha = scipy.linalg.cho_solve(cho_gg, innov)
    mu = z_t @ b0_u + psi_ug @ alpha

    c_term = float(z_t @ hp.f_inv @ z_t)
    if d_formula == "literal":
        if u_idx.size != g_idx.size:
            raise DataError(
                "literal d formula is only defined when u == g "
                f"(got u={u_idx.size}, g={g_idx.size})"
            )
        innov_lit = y_g - z_t @ b0_u
        quad = float(innov_lit @ scipy.linalg.cho_solve(cho_gg, innov_lit))
    else:
        quad = float(innov @ alpha)
    d = 1.0 + c_term + quad

    cond = psi_uu - psi_ug @ scipy.linalg.cho_solve(cho_gg, psi_ug.T)
    cond = 0.5 * (cond + cond.T)
    dof = hp.delta - u_idx.size + 1
    scale = (d / dof) * cond
    return PredictiveT(mu=mu, scale=scale, dof=float(dof), d=float(d))


def predict_point(pt: PredictiveT) -> np.ndarray:
    """Predictive location; warns when the mean does not formally exist."""
    if pt.dof <= 1:
        warnings.warn(
            f"predictive dof {pt.dof} <= 1: the mean does not exist, "
            "returning the location parameter"
        )
    return pt.mu.copy()


def predict_interval(pt: PredictiveT, level: float) -> np.ndarray:
    """Marginal equal-tailed intervals per site; returns (u, 2) lows/highs."""
    if not 0.0 < level < 1.0:
        raise DataError(f"level must be inside (0, 1): {level}")
    tq = float(stats.t.ppf(0.5 * (1.0 + level), pt.dof))
    hw = tq * np.sqrt(np.diag(pt.scale))
    return np.column_stack([pt.mu - hw, pt.mu + hw])


def sample_predictive(pt: PredictiveT, n: int, seed: int) -> np.ndarray:
    """Draw n samples; normal draws scaled by sqrt(dof / chi-square)."""
    if n < 1:
        raise DataError(f"n must be positive: {n}")
    rng = np.random.default_rng(seed)
    u = pt.mu.size
    try:
        chol = np.linalg.cholesky(pt.scale)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"predictive scale not PD: {exc}") from None
    z = rng.standard_normal((n, u))
    w = rng.chisquare(pt.dof, size=n)
    return pt.mu + (z @ chol.T) * np.sqrt(pt.dof / w)[:, None]


def log_predictive_density(pt: PredictiveT, y_u: np.ndarray) -> float:
    """Multivariate-t log density of the predictive at ``y_u``."""
    y_u = np.asarray(y_u, dtype=float)
    u = pt.mu.size
    if y_u.shape != (u,):
        raise DataError(f"y_u must have length {u}; got {y_u.shape}")
    cho = _cho(pt.scale, "predictive scale")
    diff = y_u - pt.mu
    quad = float(diff @ scipy.linalg.cho_solve(cho, diff))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    nu = pt.dof
    return float(
        gammaln(0.5 * (nu + u))
        - gammaln(0.5 * nu)
        - 0.5 * u * np.log(nu * np.pi)
        - 0.5 * logdet
        - 0.5 * (nu + u) * np.log1p(quad / nu)
    )


# ---------------------------------------------------------------------------
# Empirical Bayes assembly
# ---------------------------------------------------------------------------

def gauged_log_marginal(
    resid: np.ndarray,
    Z: np.ndarray,
    psi_gg: np.ndarray,
    delta: float,
    c: float,
    u: int,
) -> float:
    """Exact log marginal likelihood of the gauged residual panel.

    ``resid`` is E = Y_g - Z B0_g (n x g). Requires delta - u > g - 1,
    otherwise the marginal is not normalisable.
    """
    n, g = resid.shape
    nu = delta - u
    if not nu > g - 1:
        raise DataError(
            f"marginal likelihood undefined: delta - u = {nu} must exceed g - 1 = {g - 1}"
        )
    k = Z.shape[1]
    ztz = Z.T @ Z
    m = Z.T @ resid
    ete = resid.T @ resid
    if c > 0:
        shrink = c / (1.0 + c)
        core = ete - shrink * (m.T @ np.linalg.solve(ztz, m))
        log_det_omega = k * np.log1p(c)
    else:
        core = ete
        log_det_omega = 0.0
    sign, logdet_psi = np.linalg.slogdet(psi_gg)
    if sign <= 0:
        raise NumericalError("psi_gg has nonpositive determinant")
    sign_a, logdet_a = np.linalg.slogdet(psi_gg + core)
    if sign_a <= 0:
        raise NumericalError("posterior scale matrix has nonpositive determinant")
    return float(
        -0.5 * n * g * np.log(np.pi)
        - 0.5 * g * log_det_omega
        + 0.5 * nu * logdet_psi
        - 0.5 * (nu + n) * logdet_a
        + multigammaln(0.5 * (nu + n), g)
        - multigammaln(0.5 * nu, g)
    )


def default_delta_grid(g: int) -> tuple[float, ...]:
    return tuple(float(g + off) for off in DELTA_GRID_OFFSETS)


def assemble_hyperparams(
    trend: TrendModel,
    b0: np.ndarray,
    psi: np.ndarray,
    Z: np.ndarray,
    gauged_idx,
    options: AssemblyOptions | None = None,
) -> tuple[BspHyperparams, AssemblyReport]:
    """Assemble (B0, F^-1, Psi, delta) with an empirical-Bayes grid search.

    For each candidate (delta, c), Psi is rescaled so the implied prior
    mean of Sigma_gg matches the gauged residual covariance in trace
    (which needs delta > p + 1; candidates below that are skipped with a
    reason), and the candidate is scored by the exact gauged-panel
    marginal likelihood. Raises when no candidate is admissible.
    """
    options = options or AssemblyOptions()
    b0 = np.asarray(b0, dtype=float)
    psi = np.asarray(psi, dtype=float)
    Z = np.asarray(Z, dtype=float)
    gauged_idx = np.asarray(gauged_idx, dtype=int)
    k, p = b0.shape
    n = Z.shape[0]
    resid = trend.residuals
    if Z.shape != (n, k):
        raise DataError(f"Z must be ({n}, {k}); got {Z.shape}")
    if psi.shape != (p, p):
        raise DataError(f"psi must be ({p}, {p}); got {psi.shape}")
    if resid.shape[0] != n:
        raise DataError("trend residuals and Z disagree on the number of days")
    if resid.shape[1] != gauged_idx.size:
        raise DataError("trend residuals must have one column per gauged site")
    ungauged_idx = np.setdiff1d(np.arange(p), gauged_idx)
    g = gauged_idx.size
    u = ungauged_idx.size

    psi_gg = psi[np.ix_(gauged_idx, gauged_idx)]
    s_res = np.cov(resid, rowvar=False, ddof=1)
    s_res = np.atleast_2d(s_res)
    tr_res = float(np.trace(s_res))
    tr_psi = float(np.trace(psi_gg))
    if tr_psi <= 0 or tr_res <= 0:
        raise NumericalError("nonpositive trace in psi_gg or residual covariance")

    def scale_for(delta: float) -> float:
        return (delta - p - 1.0) * tr_res / tr_psi

    if options.search:
        delta_grid = options.delta_grid or default_delta_grid(g)
        c_grid = options.c_grid
    else:
        if options.delta is None:
            raise DataError("search disabled: options.delta is required")
        delta_grid = (float(options.delta),)
        c_grid = (float(options.c),)

    rows: list[tuple[float, float, float | None, str]] = []
    best: tuple[float, float, float] | None = None  # (loglik, delta, c)
    for delta in delta_grid:
        if options.rescale_psi and not delta > p + 1:
            for c in c_grid:
                rows.append((delta, c, None, f"needs delta > p + 1 = {p + 1}"))
            continue
        if not delta - u > g - 1:
            for c in c_grid:
                rows.append((delta, c, None, "marginal likelihood undefined"))
            continue
        s = scale_for(delta) if options.rescale_psi else 1.0
        for c in c_grid:
            ll = gauged_log_marginal(resid, Z, s * psi_gg, delta, c, u)
            rows.append((delta, c, ll, "ok"))
            if np.isfinite(ll) and (best is None or ll > best[0]):
                best = (ll, delta, c)

    if best is None:
        raise DataError(
            "no admissible (delta, c) grid point: every candidate fails the "
            "properness requirements (delta - u + 1 > 0 and delta > p + 1 "
            "for the trace-matching rescale)"
        )
    _, delta_star, c_star = best
    s_star = scale_for(delta_star) if options.rescale_psi else 1.0

    ztz = Z.T @ Z
    if c_star > 0:
        f_inv = c_star * np.linalg.inv(ztz)
        f_inv = 0.5 * (f_inv + f_inv.T)
    else:
        f_inv = np.zeros((k, k))

    hp = BspHyperparams(
        b0=b0,
        f_inv=f_inv,
        psi=s_star * psi,
        delta=float(delta_star),
        gauged_idx=gauged_idx,
        ungauged_idx=ungauged_idx,
    )
    # the conditional scale must be PD whenever psi is (Schur complement)
    if u > 0:
        cho_gg = _cho(hp.psi[np.ix_(gauged_idx, gauged_idx)], "Psi_gg")
        cond = hp.psi[np.ix_(ungauged_idx, ungauged_idx)] - hp.psi[
            np.ix_(ungauged_idx, gauged_idx)
        ] @ scipy.linalg.cho_solve(cho_gg, hp.psi[np.ix_(gauged_idx, ungauged_idx)])
        _cho(cond, "Psi_u|g")
    report = AssemblyReport(
        rows=tuple(rows),
        chosen_delta=float(delta_star),
        chosen_c=float(c_star),
        psi_scale=float(s_star),
    )
    return hp, report


def prefilter_lag1(residuals: np.ndarray) -> tuple[np.ndarray, float]:
    """Quasi-difference rows by the pooled lag-1 autocorrelation.

    Returns the filtered (n-1 x g) panel, variance-rescaled so that white
    input keeps its scale, together with the pooled coefficient.
    """
    r = np.asarray(residuals, dtype=float)
    if r.shape[0] < 3:
        raise DataError("need at least 3 days to prefilter")
    num = float(np.sum(r[1:] * r[:-1]))
    den = float(np.sum(r * r))
    phi = num / den if den > 0 else 0.0
    phi = float(np.clip(phi, -0.99, 0.99))
    filtered = (r[1:] - phi * r[:-1]) / np.sqrt(1.0 - phi**2)
    return filtered, phi
