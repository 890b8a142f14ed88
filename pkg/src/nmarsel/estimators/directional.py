"""Kernel density estimation for directions on the sphere."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import i0e
from sklearn.base import BaseEstimator

from ..exceptions import DataError, DomainError
from ..hemispherical import SphericalFunction
from ..spherical import build_grid, sphere_area, zonal_apply

DEFAULT_RESOLUTION = {2: 1024, 3: 64}


def vmf_kernel(d, kappa):
    """Normalised von Mises-Fisher kernel t -> C(kappa) exp(kappa t) on S^{d-1}."""
    if d == 2:
        c = 1.0 / (2.0 * np.pi * i0e(kappa))
    elif d == 3:
        c = kappa / (2.0 * np.pi * -np.expm1(-2.0 * kappa))
    else:
        raise DomainError(f"dimension {d} is not supported")

    def kernel(t, cols=None):
        return c * np.exp(kappa * (np.clip(t, -1.0, 1.0) - 1.0))

    return kernel


def default_directional_bandwidth(n, d):
    return float(n ** (-1.0 / (d + 3)))


def _check_unit(samples):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise DataError("samples must be a non-empty (n, d) array")
    if np.any(np.abs(np.linalg.norm(samples, axis=1) - 1.0) > 1e-8):
        raise DataError("directional samples must have unit norm")
    return samples


class DirectionalKDE(BaseEstimator):
    """von Mises-Fisher kernel density estimate, computed on a grid.

    Samples are binned to the nearest grid node and the kernel sum is done
    as a zonal convolution. With ``support="hemisphere"`` the samples are
    reflected across {s_1 = 0} before smoothing, which removes the boundary
    bias on H+; the estimate is then restricted to H+ and renormalised.
    """

    def __init__(self, bandwidth=None, support="hemisphere", grid=None, resolution=None):
        if support not in ("hemisphere", "sphere"):
            raise DomainError(f"unknown support {support!r}")
        if bandwidth is not None and not bandwidth > 0:
            raise DomainError("bandwidth must be positive")
        self.bandwidth = bandwidth
        self.support = support
        self.grid = grid
        self.resolution = resolution

    def fit(self, samples):
        samples = _check_unit(samples)
        n, d = samples.shape
        grid = self.grid or build_grid(d, self.resolution or DEFAULT_RESOLUTION.get(d, 64))
        if grid.d != d:
            raise DomainError("grid dimension does not match the samples")
        h = self.bandwidth or default_directional_bandwidth(n, d)
        pts = samples
        if self.support == "hemisphere":
            mirrored = samples.copy()
            mirrored[:, 0] *= -1.0
            pts = np.vstack([samples, mirrored])
        _, nearest = cKDTree(grid.nodes).query(pts)
        mass = np.bincount(nearest, minlength=grid.size) / n
        field = np.clip(zonal_apply(vmf_kernel(d, 1.0 / h**2), grid, grid, mass), 0.0, None)
        inside = grid.nodes[:, 0] > 0 if self.support == "hemisphere" else np.ones(grid.size, bool)
        total = grid.integrate(field * inside)
        if not total > 0:
            raise DataError("density estimate vanishes on the grid")
        self.grid_ = grid
        self.bandwidth_ = h
        self.field_ = field / total
        self.inside_ = inside
        return self

    def density(self, points):
        """Estimated density at arbitrary unit vectors (0 outside the support)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.clip(self.grid_.interpolate(self.field_, points), 0.0, None)
        if self.support == "hemisphere":
            vals = np.where(points[:, 0] >= 0, vals, 0.0)
        return vals

    def score_samples(self, points):
        """Log density at the given unit vectors."""
        with np.errstate(divide="ignore"):
            return np.log(self.density(points))

    def to_function(self):
        f = SphericalFunction(self.grid_, self.field_ * self.inside_, is_density=True)
        f.metadata.update(bandwidth=self.bandwidth_, support=self.support)
        return f


def directional_density(samples, bandwidth=None, grid=None, support="hemisphere"):
    """von Mises-Fisher KDE (kappa = 1 / bandwidth^2) as a SphericalFunction."""
    return DirectionalKDE(bandwidth, support, grid).fit(samples).to_function()


def uniform_hemisphere_density(d):
    return 2.0 / sphere_area(d)
