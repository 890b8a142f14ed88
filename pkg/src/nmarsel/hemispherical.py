"""Hemispherical transform, odd parts and truncated-series inversion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, PreconditionError
from .spherical import (
    SphericalGrid,
    half_indicator,
    lambda_coeff,
    odd_series_kernel,
    zonal_apply,
)


@dataclass(eq=False)
class SphericalFunction:
    """Scalar function on S^{d-1} given by its values at the nodes of a grid."""

    grid: SphericalGrid
    values: np.ndarray
    is_density: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise DomainError("need exactly one value per grid node")
        if not np.all(np.isfinite(values)):
            raise DomainError("function values must be finite")
        self.values = values
        if self.is_density:
            if np.any(values < 0):
                raise DomainError("a density must be nonnegative")
            total = self.integral()
            if abs(total - 1.0) > 1e-6:
                raise DomainError(f"a density must integrate to 1, got {total:.8g}")

    @property
    def d(self):
        return self.grid.d

    def integral(self):
        return float(self.grid.integrate(self.values))

    def l2_norm(self):
        return float(np.sqrt(self.grid.integrate(self.values**2)))

    def __call__(self, points):
        return self.grid.interpolate(self.values, points)

    @classmethod
    def from_callable(cls, grid, func, **kwargs):
        return cls(grid, np.asarray(func(grid.nodes), dtype=float), **kwargs)

    def with_values(self, values, **metadata):
        meta = dict(self.metadata)
        meta.update(metadata)
        return SphericalFunction(self.grid, values, metadata=meta)

    def to_csv(self, path):
        """Write node coordinates, weight and value, one row per node."""
        d = self.grid.d
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{k + 1}" for k in range(d)] + ["weight", "value"])
            for node, w, v in zip(self.grid.nodes, self.grid.weights, self.values):
                writer.writerow([repr(float(c)) for c in node] + [repr(float(w)), repr(float(v))])

    @classmethod
    def read_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = data.shape[1] - 2
        grid = SphericalGrid(d, data[:, :d], data[:, d])
        return cls(grid, data[:, d + 1])


def antipodal_values(f):
    """Values of f(-theta) at the nodes and whether interpolation was needed."""
    grid = f.grid
    if grid.antipodal_closed:
        return f.values[grid.antipode], False
    return grid.interpolate(f.values, -grid.nodes), True


def forward(f, smooth=True):
    """Hemispherical transform g(s) = integral of f over {theta : <s, theta> >= 0}.

    The hemisphere indicator is replaced by the fraction of each quadrature
    cell lying in the hemisphere (a linear ramp across the cell) when
    ``smooth`` is true; otherwise a hard step with weight 1/2 on ties is used.
    Both variants satisfy h(x) + h(-x) = 1, so on antipodally closed grids
    the quadrature maps even functions with zero integral to exactly zero.
    """
    grid = f.grid
    width = grid.cell_size if smooth else None

    def kernel(t, cols):
        return half_indicator(t, None if width is None else width[cols])

    out = zonal_apply(kernel, grid, grid, f.values * grid.weights)
    return f.with_values(out, transform="hemispherical")


def odd_part(f):
    """theta -> (f(theta) - f(-theta)) / 2."""
    anti, interpolated = antipodal_values(f)
    meta = {"odd_part_interpolated": True} if interpolated else {}
    return f.with_values(0.5 * (f.values - anti), **meta)


def even_part(f):
    anti, _ = antipodal_values(f)
    return f.with_values(0.5 * (f.values + anti))


def reconstruct_from_odd(fm, tol=1e-6):
    """Recover a density with f(theta) f(-theta) = 0 from its odd part.

    Returns ``2 fm 1{fm > 0}``. Raises ``PreconditionError`` when ``fm`` is
    not odd within ``tol`` (relative to max(1, sup |fm|)).
    """
    anti, _ = antipodal_values(fm)
    scale = max(1.0, float(np.max(np.abs(fm.values))) if fm.values.size else 1.0)
    defect = float(np.max(np.abs(fm.values + anti))) if fm.values.size else 0.0
    if defect > tol * scale:
        raise PreconditionError(f"input is not odd (max |f + f(-.)| = {defect:.3g})")
    return fm.with_values(2.0 * fm.values * (fm.values > 0), reconstructed=True)


def series_filter(T, damping=None):
    """Per-index multipliers for the truncated series (ones when undamped)."""
    if damping is None or damping == "none":
        return np.ones(T + 1)
    if damping == "raised-cosine":
        p = np.arange(T + 1)
        return 0.5 * (1.0 + np.cos(np.pi * p / (T + 1)))
    raise DomainError(f"unknown damping {damping!r}")


def inverse_series(g, T, gamma_grid=None, damping=None):
    """Truncated inversion of the hemispherical transform.

    Returns the odd part f^- evaluated on ``gamma_grid`` (defaults to the grid
    of ``g``) as

        f^-(gamma) ~ sum_{p=0}^{T} 1/lambda_{2p+1,d} int q_{2p+1,d}(gamma . s) g(s) ds.

    Only the odd part of ``g`` contributes, so replacing ``g`` by ``g^-``
    leaves the result unchanged up to quadrature error.
    """
    if T < 0:
        raise DomainError(f"truncation must be >= 0, got {T}")
    gamma_grid = g.grid if gamma_grid is None else gamma_grid
    if gamma_grid.d != g.d:
        raise DomainError("gamma grid dimension does not match g")
    d = g.d
    coeffs = series_filter(T, damping) / np.array([lambda_coeff(d, p) for p in range(T + 1)])
    out = zonal_apply(
        lambda t, cols: odd_series_kernel(d, T, t, coeffs),
        g.grid,
        gamma_grid,
        g.values * g.grid.weights,
    )
    return SphericalFunction(gamma_grid, out, metadata={"T": int(T), "damping": damping or "none"})
