"""Shared plumbing: kernels, bandwidth rules, configs and data coercion."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..exceptions import ConfigError, DataError

KERNELS = {
    "epanechnikov": lambda u: 0.75 * np.clip(1.0 - u * u, 0.0, None),
    "biweight": lambda u: (15.0 / 16.0) * np.clip(1.0 - u * u, 0.0, None) ** 2,
    "triangular": lambda u: np.clip(1.0 - np.abs(u), 0.0, None),
}


def kernel_fn(name):
    try:
        return KERNELS[name]
    except KeyError:
        raise ConfigError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None


def default_bandwidth(x, deriv=False):
    """Rule of thumb 0.9 min(sd, IQR / 1.349) n^(-1/5).

    With ``deriv`` the exponent is -1/7, the rate suited to slope estimation.
    """
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    n = max(x.size, 2)
    q75, q25 = np.percentile(x, [75, 25]) if x.size else (1.0, 0.0)
    spread = min(np.std(x), (q75 - q25) / 1.349) if x.size > 1 else 1.0
    if not spread > 0:
        spread = max(np.std(x), 1.0)
    return 0.9 * spread * n ** (-1.0 / 7.0 if deriv else -1.0 / 5.0)


@dataclass(frozen=True)
class LocalPolyConfig:
    """Local polynomial smoothing options.

    ``bandwidth`` is in the units of the regressor (one value per regressor
    is also accepted by the multivariate fits); ``None`` selects the rule of
    thumb. ``degree`` is 0 (Nadaraya-Watson) or 1 (local linear).
    """

    bandwidth: Optional[Union[float, tuple]] = None
    degree: int = 1
    kernel: str = "epanechnikov"

    def __post_init__(self):
        if self.bandwidth is not None:
            bw = np.asarray(self.bandwidth, dtype=float)
            if bw.size == 0 or not np.all(bw > 0):
                raise ConfigError("bandwidth must be positive")
            object.__setattr__(self, "bandwidth", float(bw) if bw.ndim == 0 else tuple(bw.tolist()))
        if self.degree not in (0, 1):
            raise ConfigError("degree must be 0 or 1")
        kernel_fn(self.kernel)


@dataclass(frozen=True)
class EstimatorConfig:
    """Options shared by the identification estimators.

    Attributes
    ----------
    local : LocalPolyConfig
        Smoother for regressions on the propensity, on S or on (V, Zbar).
    propensity_bandwidth : float, optional
        Bandwidth of the kernel regression of R on Z.
    infinity_margin : float
        The propensity support must reach 1 - margin for identification at
        infinity to be trusted.
    min_points : int
        Minimum observations in each boundary neighbourhood.
    density_bandwidth : float, optional
        Angular bandwidth (radians) of the directional density estimate.
    density_floor : float
        Samples whose estimated density is below ``floor * max`` are dropped.
    grid_resolution : int
        Resolution of the internal spherical grids.
    x_cell : optional
        When given, only units whose covariates equal this value are used.
    """

    local: LocalPolyConfig = LocalPolyConfig()
    propensity_bandwidth: Optional[float] = None
    infinity_margin: float = 0.05
    min_points: int = 30
    density_bandwidth: Optional[float] = None
    density_floor: float = 1e-3
    grid_resolution: int = 64
    x_cell: Optional[tuple] = None

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        local = data.pop("local", {})
        if not isinstance(local, LocalPolyConfig):
            local = LocalPolyConfig(**local)
        if data.get("x_cell") is not None:
            data["x_cell"] = tuple(np.atleast_1d(data["x_cell"]).tolist())
        try:
            return cls(local=local, **data)
        except TypeError as exc:
            raise ConfigError(f"invalid estimator configuration: {exc}") from None


# ---------------------------------------------------------------------------
# outcome transforms
# ---------------------------------------------------------------------------


def resolve_phi(phi):
    """Turn ``phi`` into a vectorised function of y.

    Accepts a callable, ``"one"``, ``"identity"`` or ``("indicator", t)``
    for y -> 1{y <= t}.
    """
    if callable(phi):
        return phi
    if phi in (None, "one", 1):
        return lambda y: np.ones_like(y, dtype=float)
    if phi == "identity":
        return lambda y: np.asarray(y, dtype=float)
    if isinstance(phi, (tuple, list)) and len(phi) == 2 and phi[0] == "indicator":
        t = float(phi[1])
        return lambda y: (np.asarray(y) <= t).astype(float)
    raise ConfigError(f"cannot interpret phi={phi!r}")


def phi_times_r(phi, y, r):
    """phi(Y) R without ever evaluating phi on a missing outcome."""
    out = np.zeros(r.shape[0])
    mask = r == 1
    out[mask] = resolve_phi(phi)(y[mask])
    return out


# ---------------------------------------------------------------------------
# data coercion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    """Arrays used by the estimators, in canonical (sorted) order."""

    y: np.ndarray
    r: np.ndarray
    z: np.ndarray
    x: np.ndarray

    @property
    def n(self):
        return self.r.shape[0]


def as_sample(data, x_cell=None):
    """Extract (y, r, z, x) from a dataset-like object.

    Rows are put in a canonical order so that every estimator is exactly
    invariant to permutations of its input.
    """
    try:
        y = np.asarray(data.y, dtype=float)
        r = np.asarray(data.r, dtype=int)
        z = np.asarray(data.z, dtype=float)
        x = np.asarray(data.x, dtype=float)
    except AttributeError as exc:
        raise DataError(f"dataset is missing a field: {exc}") from None
    if z.ndim == 1:
        z = z[:, None]
    if x.ndim == 1:
        x = x[:, None]
    n = r.shape[0]
    if y.shape[0] != n or z.shape[0] != n or x.shape[0] != n:
        raise DataError("dataset fields have inconsistent lengths")
    if np.any((r != 0) & (r != 1)):
        raise DataError("response flags must be 0 or 1")
    if np.any(np.isnan(y[r == 1])):
        raise DataError("respondents must have an observed outcome")
    if x_cell is not None:
        cell = np.asarray(x_cell, dtype=float)
        keep = np.all(x == cell[None, :], axis=1)
        y, r, z, x = y[keep], r[keep], z[keep], x[keep]
        if keep.sum() == 0:
            raise DataError(f"no unit falls in covariate cell {tuple(cell)}")
    y_key = np.where(r == 1, y, -np.inf)
    keys = [y_key, r] + [x[:, j] for j in range(x.shape[1])][::-1] + [z[:, j] for j in range(z.shape[1])][::-1]
    order = np.lexsort(keys[::-1])
    return Sample(y[order], r[order], z[order], x[order])


def warn(message):
    warnings.warn(message, RuntimeWarning, stacklevel=3)
