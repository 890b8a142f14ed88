"""Moments and nonrespondent laws identified from the selected sample."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from ..exceptions import DomainError, InsufficientDataError, PreconditionError
from ..models import normalize_instruments
from ._base import EstimatorConfig, as_sample, phi_times_r, warn
from .local import estimate_propensity, local_poly, local_poly_indicator


@dataclass
class MeanEstimate:
    """A point estimate together with the curve it came from and diagnostics."""

    value: float
    flags: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _config(config):
    if config is None:
        return EstimatorConfig()
    if isinstance(config, dict):
        return EstimatorConfig.from_dict(config)
    return config


# ---------------------------------------------------------------------------
# scalar threshold designs
# ---------------------------------------------------------------------------

_P_GRID = 201


def fitted_propensity(sample, config, propensity=None):
    """Propensity at every unit: ``propensity(z)`` if given, else estimated."""
    if propensity is not None:
        return np.clip(np.asarray(propensity(sample.z), dtype=float).ravel(), 0.0, 1.0)
    cfg = config.local.__class__(bandwidth=config.propensity_bandwidth, degree=0, kernel=config.local.kernel)
    return estimate_propensity(sample.r, sample.z, config=cfg)


def _p_grid(p_hat):
    lo, hi = np.quantile(p_hat, [0.001, 0.999])
    if not hi > lo:
        raise InsufficientDataError("estimated propensity has no spread")
    return np.linspace(lo, hi, _P_GRID)


def _integrate_liv(grid, values, slopes):
    """m(lo) + int_lo^hi m'(p) dp + m'(hi) (1 - hi), column-wise."""
    inner = np.trapezoid(slopes, grid, axis=0)
    return values[0] + inner + slopes[-1] * (1.0 - grid[-1])


def mean_by_integral(dataset, phi="identity", config=None, propensity=None):
    """E[phi(Y)] as the integral over p of the local instrumental variable.

    m(p) = E[phi(Y) R | pi(Z) = p] is smoothed by local linear regression on
    the estimated propensity; its slope is integrated over an interior grid
    and the curve is extended to the endpoints using m(0) = 0 and the slope at
    the upper edge.
    """
    config = _config(config)
    sample = as_sample(dataset, config.x_cell)
    p_hat = fitted_propensity(sample, config, propensity)
    grid = _p_grid(p_hat)
    target = phi_times_r(phi, sample.y, sample.r)
    values, slopes, widened = local_poly(p_hat, target, grid, config.local, return_flags=True)
    value = float(_integrate_liv(grid, values, slopes))
    unreliable = bool(grid[-1] < 1.0 - config.infinity_margin)
    if unreliable:
        warn(f"propensity support ends at {grid[-1]:.3f}; identification at infinity is unreliable")
    endpoint = float(values[-1] + slopes[-1] * (1.0 - grid[-1]))
    return MeanEstimate(
        value,
        flags={"at_infinity_unreliable": unreliable, "widened_windows": int(widened.sum())},
        details={"p_grid": grid, "m": values, "liv": slopes, "endpoint": endpoint},
    )


# ---------------------------------------------------------------------------
# random coefficient designs
# ---------------------------------------------------------------------------


def _tangent_basis(sigma):
    d = sigma.size
    e1 = np.zeros(d)
    e1[0] = 1.0
    if d == 2:
        return e1[None, :]
    if d == 3:
        b2 = np.cross(sigma, e1)
        return np.vstack([e1, b2 / np.linalg.norm(b2)])
    raise DomainError(f"dimension {d} is not supported")


def _check_boundary_direction(s_tilde, d):
    s = np.asarray(s_tilde, dtype=float).ravel()
    if s.size != d:
        raise DomainError(f"boundary direction must have {d} coordinates")
    if abs(np.linalg.norm(s) - 1.0) > 1e-9 or abs(s[0]) > 1e-9:
        raise DomainError("boundary direction must be a unit vector with first coordinate 0")
    s = s.copy()
    s[0] = 0.0
    return s / np.linalg.norm(s)


def default_angular_bandwidth(n, d):
    return float(n ** (-1.0 / (d + 3)))


def boundary_limits(S, rows, s_tilde, bandwidth, min_points):
    """One-sided local linear limits of a regression on S at s_tilde and -s_tilde.

    ``rows(idx)`` returns the response rows for the selected indices, which
    lets the caller avoid building wide response matrices. Returns a dict
    with the two limits and the neighbourhood sizes.
    """
    out = {}
    for name, sigma in (("+s_tilde", s_tilde), ("-s_tilde", -s_tilde)):
        c = np.clip(S @ sigma, -1.0, 1.0)
        delta = np.arccos(c)
        idx = np.flatnonzero(delta < bandwidth)
        if idx.size < min_points:
            raise InsufficientDataError(
                f"only {idx.size} observations within {bandwidth:.3g} rad of {name} "
                f"(minimum {min_points})"
            )
        tang = S[idx] - c[idx, None] * sigma
        norm = np.linalg.norm(tang, axis=1)
        scale = np.divide(delta[idx], norm, out=np.zeros_like(norm), where=norm > 0)
        coords = (tang @ _tangent_basis(sigma).T) * scale[:, None] / bandwidth
        w = 0.75 * (1.0 - (delta[idx] / bandwidth) ** 2)
        D = np.column_stack([np.ones(idx.size), coords])
        sw = np.sqrt(w)
        Y = np.asarray(rows(idx), dtype=float)
        coef, _, rank, _ = np.linalg.lstsq(D * sw[:, None], (Y.T * sw).T, rcond=None)
        if rank < D.shape[1]:
            raise InsufficientDataError(f"degenerate design near {name}")
        out[name] = coef[0]
        out[f"n{name}"] = int(idx.size)
    return out


def mean_at_boundary(dataset, phi="identity", s_tilde=None, config=None):
    """E[phi(Y)] from the two one-sided limits of E[phi(Y) R | S = s].

    The limits at s_tilde and -s_tilde are local linear extrapolations in
    geodesic tangent coordinates, using only points of the observed
    half-sphere within the angular bandwidth ``config.local.bandwidth``.
    """
    config = _config(config)
    sample = as_sample(dataset, config.x_cell)
    S = normalize_instruments(sample.z)
    d = S.shape[1]
    if s_tilde is None:
        s_tilde = np.eye(d)[1]
    s_tilde = _check_boundary_direction(s_tilde, d)
    h = config.local.bandwidth or default_angular_bandwidth(sample.n, d)
    target = phi_times_r(phi, sample.y, sample.r)
    lim = boundary_limits(S, lambda idx: target[idx], s_tilde, h, config.min_points)
    value = float(lim["+s_tilde"] + lim["-s_tilde"])
    return MeanEstimate(
        value,
        details={
            "limit_plus": float(lim["+s_tilde"]),
            "limit_minus": float(lim["-s_tilde"]),
            "n_plus": lim["n+s_tilde"],
            "n_minus": lim["n-s_tilde"],
            "bandwidth": h,
        },
    )


# ---------------------------------------------------------------------------
# law of the nonrespondents
# ---------------------------------------------------------------------------

METHODS = ("threshold", "rc", "respondents")


@dataclass
class NonrespondentCDF:
    """Estimated CDF of Y given R = 0 on a grid of thresholds."""

    t_grid: np.ndarray
    values: np.ndarray
    raw: np.ndarray
    method: str
    flags: dict = field(default_factory=dict)

    def __call__(self, t):
        return np.interp(t, self.t_grid, self.values, left=0.0, right=1.0)

    def quantile(self, u):
        """Generalised inverse F^-(u) = inf{t : F(t) >= u}, linear between nodes.

        Values are kept inside the hull of the threshold grid.
        """
        u = np.asarray(u, dtype=float)
        F, t = self.values, self.t_grid
        k = np.searchsorted(F, u, side="left")
        k = np.clip(k, 1, F.size - 1)
        f0, f1 = F[k - 1], F[k]
        gap = f1 - f0
        frac = np.divide(u - f0, gap, out=np.ones_like(u), where=gap > 0)
        out = t[k - 1] + np.clip(frac, 0.0, 1.0) * (t[k] - t[k - 1])
        out = np.where(u <= F[0], t[0], out)
        return np.where(u > F[-1], t[-1], out)


def default_t_grid(y_observed, size=512):
    y = np.asarray(y_observed, dtype=float)
    q25, q75 = np.percentile(y, [25, 75])
    iqr = max(q75 - q25, np.std(y), 1e-8)
    return np.linspace(y.min() - 3 * iqr, y.max() + 3 * iqr, size)


def _respondent_ecdf(y, t_grid):
    ys = np.sort(y)
    return np.searchsorted(ys, t_grid, side="right") / max(ys.size, 1)


def nonrespondent_cdf(dataset, t_grid=None, method="threshold", config=None, s_tilde=None, propensity=None):
    """F(t | R = 0) = (E[1{Y <= t}] - E[1{Y <= t} R]) / P(R = 0) on ``t_grid``.

    ``method`` chooses how E[1{Y <= t}] is identified: ``threshold``
    (integral of the local instrumental variable), ``rc`` (boundary limits
    on the sphere) or ``respondents`` (the respondents' empirical CDF, valid
    only when data are missing at random). The plug-in curve is projected to
    a CDF by isotonic regression followed by clipping to [0, 1].
    """
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; choose from {METHODS}")
    config = _config(config)
    sample = as_sample(dataset, config.x_cell)
    resp = sample.r == 1
    p0 = 1.0 - resp.mean()
    if p0 < 0.01:
        raise PreconditionError(f"P(R = 0) = {p0:.4f} < 0.01: no nonrespondents to impute")
    y_obs = sample.y[resp]
    t_grid = default_t_grid(y_obs) if t_grid is None else np.sort(np.asarray(t_grid, dtype=float).ravel())
    flags = {}
    if method == "respondents":
        raw = _respondent_ecdf(y_obs, t_grid)
    else:
        joint = _respondent_ecdf(y_obs, t_grid) * resp.mean()
        if method == "threshold":
            p_hat = fitted_propensity(sample, config, propensity)
            grid = _p_grid(p_hat)
            vals, slopes, widened = local_poly_indicator(
                p_hat, sample.y, sample.r, t_grid, grid, config.local, return_flags=True
            )
            total = _integrate_liv(grid, vals, slopes)
            flags["at_infinity_unreliable"] = bool(grid[-1] < 1.0 - config.infinity_margin)
            flags["widened_windows"] = int(widened.sum())
        else:
            S = normalize_instruments(sample.z)
            d = S.shape[1]
            st = _check_boundary_direction(np.eye(d)[1] if s_tilde is None else s_tilde, d)
            h = config.local.bandwidth or default_angular_bandwidth(sample.n, d)

            def rows(idx):
                y, r = sample.y[idx], sample.r[idx]
                return (r[:, None] == 1) & (np.where(r == 1, y, np.inf)[:, None] <= t_grid[None, :])

            lim = boundary_limits(S, rows, st, h, config.min_points)
            total = lim["+s_tilde"] + lim["-s_tilde"]
        raw = (total - joint) / p0
    values = np.clip(isotonic_regression(raw).x, 0.0, 1.0)
    return NonrespondentCDF(t_grid, values, np.asarray(raw, dtype=float), method, flags)
