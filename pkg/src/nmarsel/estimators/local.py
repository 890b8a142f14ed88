"""Kernel regression: local polynomial fits and propensity scores."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..exceptions import DataError, InsufficientDataError
from ._base import LocalPolyConfig, default_bandwidth, kernel_fn

_MAX_WIDEN = 40


def _as_config(config):
    if config is None:
        return LocalPolyConfig()
    if isinstance(config, dict):
        return LocalPolyConfig(**config)
    return config


def _local_fit(xs, eval_points, config, moments, out_shape):
    """Shared window logic of the scalar local polynomial fits.

    ``moments(lo, hi, w, wc)`` returns the kernel-weighted sums
    (sum w y, sum wc y) over the sorted window ``lo:hi``, where ``wc`` are the
    weights times the centred scaled offsets.
    """
    kern = kernel_fn(config.kernel)
    h0 = config.bandwidth or default_bandwidth(xs, deriv=config.degree == 1)
    k = eval_points.shape[0]
    values = np.empty((k,) + out_shape)
    slopes = np.empty((k,) + out_shape) if config.degree == 1 else None
    flags = np.zeros(k, dtype=bool)
    for i, x0 in enumerate(eval_points):
        h = h0
        for _ in range(_MAX_WIDEN):
            lo = np.searchsorted(xs, x0 - h, side="right")
            hi = np.searchsorted(xs, x0 + h, side="left")
            u = (xs[lo:hi] - x0) / h
            w = kern(u)
            s0 = w.sum()
            if s0 > 0:
                if config.degree == 0:
                    break
                ubar = (w @ u) / s0
                uc = u - ubar
                s2 = w @ (uc * uc)
                if s2 > 1e-10 * s0:
                    break
            h *= 2.0
            flags[i] = True
        else:
            raise InsufficientDataError(f"no usable kernel window around {x0!r}")
        if config.degree == 0:
            t0, _ = moments(lo, hi, w, None)
            values[i] = t0 / s0
        else:
            t0, t1 = moments(lo, hi, w, w * uc)
            b = t1 / s2
            values[i] = t0 / s0 - b * ubar
            slopes[i] = b / h
    return values, slopes, flags


def _prepare(xs, eval_points):
    xs = np.asarray(xs, dtype=float).ravel()
    eval_points = np.atleast_1d(np.asarray(eval_points, dtype=float)).ravel()
    if xs.size < 2:
        raise DataError("local_poly needs at least two observations")
    if not np.all(np.isfinite(xs)):
        raise DataError("regressor values must be finite")
    order = np.argsort(xs, kind="stable")
    return xs[order], order, eval_points


def local_poly(xs, ys, eval_points, config=None, return_flags=False):
    """Local polynomial regression of ``ys`` on the scalar ``xs``.

    ``ys`` may be two dimensional, in which case each column is smoothed
    with the same windows. Returns ``(values, first_derivatives)``; the
    derivatives are ``None`` for degree 0. With ``return_flags`` a boolean
    array marks evaluation points whose window had to be widened.
    """
    config = _as_config(config)
    xs_sorted, order, eval_points = _prepare(xs, eval_points)
    ys = np.asarray(ys, dtype=float)
    if ys.shape[0] != order.size:
        raise DataError("xs and ys must have the same length")
    ys_sorted = ys[order]

    def moments(lo, hi, w, wc):
        block = ys_sorted[lo:hi]
        return w @ block, None if wc is None else wc @ block

    values, slopes, flags = _local_fit(xs_sorted, eval_points, config, moments, ys.shape[1:])
    return (values, slopes, flags) if return_flags else (values, slopes)


def local_poly_indicator(xs, y, r, t_grid, eval_points, config=None, return_flags=False):
    """Local polynomial regression of 1{y <= t} r on ``xs`` for every t.

    Equivalent to ``local_poly`` with one column per threshold but without
    materialising the n x len(t_grid) response matrix. Entries of ``y`` with
    r = 0 are ignored.
    """
    config = _as_config(config)
    xs_sorted, order, eval_points = _prepare(xs, eval_points)
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    y = np.asarray(y, dtype=float)[order]
    resp = np.asarray(r)[order] == 1

    def moments(lo, hi, w, wc):
        keep = resp[lo:hi]
        yw = y[lo:hi][keep]
        srt = np.argsort(yw, kind="stable")
        pos = np.searchsorted(yw[srt], t_grid, side="right")
        c0 = np.concatenate([[0.0], np.cumsum(w[keep][srt])])[pos]
        c1 = None if wc is None else np.concatenate([[0.0], np.cumsum(wc[keep][srt])])[pos]
        return c0, c1

    values, slopes, flags = _local_fit(xs_sorted, eval_points, config, moments, t_grid.shape)
    return (values, slopes, flags) if return_flags else (values, slopes)


# ---------------------------------------------------------------------------
# multivariate fits
# ---------------------------------------------------------------------------


def _bandwidth_vector(X, bandwidth, deriv):
    q = X.shape[1]
    if bandwidth is None:
        return np.array([default_bandwidth(X[:, j], deriv=deriv) for j in range(q)])
    h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (q,)).copy()
    if np.any(h <= 0):
        raise DataError("bandwidths must be positive")
    return h


def local_linear_nd(X, Y, eval_points, bandwidth=None, kernel="epanechnikov", degree=1, min_points=None):
    """Local polynomial fit with a product kernel in several regressors.

    Returns ``(values, gradients, flags)``; gradients has shape
    (k, q) + Y.shape[1:] and is ``None`` for degree 0.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.asarray(Y, dtype=float)
    E = np.asarray(eval_points, dtype=float).reshape(-1, X.shape[1])
    n, q = X.shape
    kern = kernel_fn(kernel)
    h0 = _bandwidth_vector(X, bandwidth, deriv=degree == 1)
    need = max(min_points or 0, q + 2 if degree == 1 else 1)
    tree = cKDTree(X / h0)
    k = E.shape[0]
    values = np.empty((k,) + Y.shape[1:])
    grads = np.empty((k, q) + Y.shape[1:]) if degree == 1 else None
    flags = np.zeros(k, dtype=bool)
    for i, e in enumerate(E):
        scale = 1.0
        for _ in range(_MAX_WIDEN):
            idx = tree.query_ball_point(e / h0, r=scale, p=np.inf)
            if len(idx) >= need:
                idx = np.sort(np.asarray(idx, dtype=int))
                U = (X[idx] - e) / (h0 * scale)
                w = np.prod(kern(U), axis=1)
                if np.count_nonzero(w) >= need:
                    if degree == 0:
                        break
                    D = np.column_stack([np.ones(idx.size), U])
                    sw = np.sqrt(w)
                    coef, _, rank, _ = np.linalg.lstsq(D * sw[:, None], (Y[idx].T * sw).T, rcond=None)
                    if rank == q + 1:
                        break
            scale *= 2.0
            flags[i] = True
        else:
            raise InsufficientDataError(f"no usable kernel window around {e.tolist()}")
        if degree == 0:
            values[i] = (w @ Y[idx]) / w.sum()
        else:
            values[i] = coef[0]
            hs = (h0 * scale).reshape((q,) + (1,) * (Y.ndim - 1))
            grads[i] = coef[1:] / hs
    return values, grads, flags


# ---------------------------------------------------------------------------
# propensity score
# ---------------------------------------------------------------------------


def _prefix(a):
    return np.concatenate([[0.0], np.cumsum(a)])


def _epanechnikov_1d(z, R, e, h):
    """Exact Nadaraya-Watson with the Epanechnikov kernel via prefix sums."""
    order = np.argsort(z, kind="stable")
    centre = np.median(z)
    u = (z[order] - centre) / h
    Rs = R[order]
    P = [_prefix(np.ones_like(u)), _prefix(u), _prefix(u * u)]
    Q = [_prefix(Rs), _prefix(Rs * u), _prefix(Rs * u * u)]
    e0 = (e - centre) / h
    lo = np.searchsorted(u, e0 - 1.0, side="right")
    hi = np.searchsorted(u, e0 + 1.0, side="left")

    def window(S):
        s0, s1, s2 = (s[hi] - s[lo] for s in S)
        return s0 - (s2 - 2.0 * e0 * s1 + e0 * e0 * s0)

    return window(Q), window(P)


def estimate_propensity(R, Z, eval_points=None, config=None, return_flags=False):
    """Kernel regression of the response flag R on the instruments Z.

    A product kernel with one bandwidth per instrument is used; the result is
    clipped to [0, 1]. Evaluation points whose window is empty get a widened
    bandwidth and are flagged.
    """
    config = _as_config(config)
    R = np.asarray(R, dtype=float).ravel()
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != R.size:
        raise DataError("R and Z must have the same number of rows")
    E = Z if eval_points is None else np.asarray(eval_points, dtype=float).reshape(-1, Z.shape[1])
    if Z.shape[1] == 0:
        out = np.full(E.shape[0], R.mean())
        return (out, np.zeros(E.shape[0], bool)) if return_flags else out
    h = _bandwidth_vector(Z, config.bandwidth, deriv=False)
    if Z.shape[1] == 1 and config.kernel == "epanechnikov":
        e = E[:, 0]
        num, den = _epanechnikov_1d(Z[:, 0], R, e, h[0])
        flags = ~(den > 1e-12)
        out = np.divide(num, den, out=np.zeros_like(num), where=~flags)
        hh = h[0]
        todo = np.flatnonzero(flags)
        for _ in range(_MAX_WIDEN):
            if todo.size == 0:
                break
            hh *= 2.0
            num, den = _epanechnikov_1d(Z[:, 0], R, e[todo], hh)
            ok = den > 1e-12
            out[todo[ok]] = num[ok] / den[ok]
            todo = todo[~ok]
    else:
        out, _, flags = local_linear_nd(Z, R, E, bandwidth=h, kernel=config.kernel, degree=0)
    out = np.clip(out, 0.0, 1.0)
    return (out, flags) if return_flags else out
