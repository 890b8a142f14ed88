"""Weighted Gini index, its variance and multiple imputation of missing outcomes."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataError, DomainError
from .models import make_rng

# ---------------------------------------------------------------------------
# Gini index
# ---------------------------------------------------------------------------


def _check(y, weight):
    y = np.asarray(y, dtype=float).ravel()
    w = np.ones_like(y) if weight is None else np.asarray(weight, dtype=float).ravel()
    if w.shape != y.shape:
        raise DataError("y and weight must have the same length")
    if y.size == 0:
        raise DataError("no records")
    if not np.all(np.isfinite(y)):
        raise DataError("every outcome must be present and finite")
    if np.any(y < 0):
        raise DataError("the Gini index is only defined here for nonnegative outcomes")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DataError("weights must be positive")
    if not np.sum(w * y) > 0:
        raise DataError("weighted total of y is zero")
    return y, w


def _gini_rows(Y, W):
    """Gini index of every row of Y (weights W), rows sorted internally.

    Sequential midpoint ranks (C_{i-1} + w_i / 2) / sum(w) in sorted order
    give the same total as tie-group midpoint ranks, because within a group
    of tied values sum_i w_i (2 c_i + w_i) = (sum_i w_i)^2.
    """
    order = np.argsort(Y, axis=1, kind="stable")
    ys = np.take_along_axis(Y, order, axis=1)
    ws = np.take_along_axis(W, order, axis=1)
    total = ws.sum(axis=1, keepdims=True)
    before = np.cumsum(ws, axis=1) - ws
    wy = ws * ys
    num = np.sum(wy * (2.0 * before + ws - total), axis=1) / total[:, 0]
    return num / wy.sum(axis=1)


def weighted_gini(y, weight=None):
    """Weighted Gini index with midpoint ranks.

    With w_j = weight_j / sum(weight) and
    r(i) = sum_j w_j (1{y_j < y_i} + 1/2 1{y_j = y_i}) the index is
    sum_i weight_i (2 r(i) - 1) y_i / sum_i weight_i y_i, which equals the
    weighted mean absolute difference over twice the weighted mean.
    """
    y, w = _check(y, weight)
    return float(_gini_rows(y[None, :], w[None, :])[0])


def gini_pairwise_oracle(y, weight=None):
    """O(n^2) reference: sum_ij w_i w_j |y_i - y_j| / (2 sum(w) sum(w y))."""
    y, w = _check(y, weight)
    diff = np.abs(y[:, None] - y[None, :])
    return float(w @ diff @ w / (2.0 * w.sum() * np.sum(w * y)))


# ---------------------------------------------------------------------------
# variance and normal approximation
# ---------------------------------------------------------------------------


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else make_rng(seed)


def bootstrap_variance(y, weight=None, B=200, seed=0, method="bootstrap"):
    """Variance of the weighted Gini estimate.

    ``bootstrap`` resamples the n records with replacement, each keeping its
    weight; ``jackknife`` uses the delete-one estimates.
    """
    y, w = _check(y, weight)
    n = y.size
    if method == "jackknife":
        if n < 2:
            return 0.0
        keep = ~np.eye(n, dtype=bool)
        with np.errstate(invalid="ignore", divide="ignore"):
            loo = _gini_rows(np.broadcast_to(y, (n, n))[keep].reshape(n, n - 1), np.broadcast_to(w, (n, n))[keep].reshape(n, n - 1))
        loo = np.where(np.isfinite(loo), loo, 0.0)
        return float((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    if method != "bootstrap":
        raise ConfigError(f"unknown variance method {method!r}")
    if B < 50:
        raise ConfigError(f"bootstrap needs B >= 50, got {B}")
    rng = _rng(seed)
    stats = np.empty(B)
    step = max(1, 2_000_000 // n)
    for start in range(0, B, step):
        idx = rng.integers(0, n, size=(min(step, B - start), n))
        yb, wb = y[idx], w[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            g = _gini_rows(yb, wb)
        # a resample made only of zeros has an undefined index; count it as 0
        stats[start : start + idx.shape[0]] = np.where(np.isfinite(g), g, 0.0)
    return float(np.var(stats, ddof=1))


def normal_draw(estimate, variance, seed=0):
    """estimate + sqrt(variance) * eps with eps standard normal."""
    if variance < 0:
        raise DomainError("variance must be nonnegative")
    eps = _rng(seed).standard_normal()
    return float(estimate + np.sqrt(variance) * eps)


def confidence_interval(replicates, alpha=0.1):
    """Equal-tailed empirical quantile interval at level 1 - alpha."""
    reps = np.asarray(replicates, dtype=float).ravel()
    if reps.size == 0:
        raise DataError("no replicates")
    if not 0.0 <= alpha < 1.0:
        raise ConfigError("alpha must lie in [0, 1)")
    if reps.size < 20:
        warnings.warn(f"only {reps.size} replicates; quantiles are unstable below 20", RuntimeWarning, stacklevel=2)
    lo, hi = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# multiple imputation
# ---------------------------------------------------------------------------


@dataclass
class ImputationReport:
    replicates: np.ndarray
    interval: tuple
    level: float
    seeds: list
    method: str
    flags: dict = field(default_factory=dict)
    point_estimates: np.ndarray = None
    variances: np.ndarray = None

    def to_dict(self, include_replicates=True):
        out = {
            "method": self.method,
            "level": self.level,
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "median": float(np.median(self.replicates)),
            "T": int(self.replicates.size),
            "seeds": [int(s) for s in self.seeds],
            "flags": self.flags,
        }
        if include_replicates:
            out["replicates"] = [float(v) for v in self.replicates]
            out["gini"] = [float(v) for v in self.point_estimates]
            out["variance"] = [float(v) for v in self.variances]
        return out

    def to_json(self, include_replicates=True):
        return json.dumps(self.to_dict(include_replicates), indent=2, sort_keys=True)

    def csv_summary(self):
        lo, hi = self.interval
        header = "method,T,level,lower,median,upper"
        row = f"{self.method},{self.replicates.size},{self.level!r},{lo!r},{float(np.median(self.replicates))!r},{hi!r}"
        return header + "\n" + row + "\n"


def replicate_seeds(seed, T):
    """Independent 64-bit seeds for T replicates derived from one master seed."""
    children = np.random.SeedSequence(int(seed)).spawn(T)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


IMPUTATION_METHODS = {"threshold": "threshold", "scalar": "threshold", "rc": "rc", "respondents": "respondents"}


def multiple_impute(frame, model="threshold", T=20, alpha=0.1, seed=0, B=100, config=None,
                    variance_method="bootstrap", s_tilde=None, t_grid=None):
    """Multiple imputation interval for the Gini index of y.

    The law of y given R = 0 is estimated once with ``nonrespondent_cdf``
    (``model`` selects the identification strategy). For each replicate the
    missing outcomes are drawn by inverting that CDF at uniform draws, the
    completed sample gives a Gini estimate and a bootstrap variance, and
    G_t = gini + sqrt(variance) eps_t with an independent standard normal
    eps_t. The interval holds the alpha/2 and 1 - alpha/2 quantiles of G_t.
    """
    from .estimators.identification import nonrespondent_cdf

    if model not in IMPUTATION_METHODS:
        raise ConfigError(f"unknown imputation model {model!r}; choose from {sorted(IMPUTATION_METHODS)}")
    if T < 1:
        raise ConfigError("T must be >= 1")
    r = np.asarray(frame.r, dtype=int)
    y = np.asarray(frame.y, dtype=float)
    w = np.asarray(frame.weight, dtype=float)
    missing = np.flatnonzero(r == 0)
    seeds = replicate_seeds(seed, T)
    flags = {"n": int(r.size), "n_missing": int(missing.size)}
    gini = np.empty(T)
    var = np.empty(T)
    eps = np.empty(T)
    if missing.size == 0:
        flags["normal_approximation"] = True
        g0 = weighted_gini(y, w)
        v0 = bootstrap_variance(y, w, B, make_rng(seed), variance_method)
        for t, s in enumerate(seeds):
            eps[t] = make_rng(s).standard_normal()
        gini[:] = g0
        var[:] = v0
    else:
        cdf = nonrespondent_cdf(frame, t_grid, IMPUTATION_METHODS[model], config, s_tilde=s_tilde)
        flags.update(cdf.flags)
        flags["t_grid"] = [float(cdf.t_grid[0]), float(cdf.t_grid[-1])]
        for t, s in enumerate(seeds):
            rng = make_rng(s)
            eps[t] = rng.standard_normal()
            completed = y.copy()
            completed[missing] = cdf.quantile(rng.uniform(size=missing.size))
            gini[t] = weighted_gini(completed, w)
            var[t] = bootstrap_variance(completed, w, B, rng, variance_method)
    reps = gini + np.sqrt(var) * eps
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        interval = confidence_interval(reps, alpha)
    return ImputationReport(reps, interval, 1.0 - alpha, seeds, model, flags, gini, var)
