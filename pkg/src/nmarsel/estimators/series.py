"""Series estimator of the conditional moment density of the coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DomainError
from ..hemispherical import SphericalFunction, reconstruct_from_odd
from ..models import normalize_instruments
from ..spherical import (
    SphericalGrid,
    _recursion,
    build_grid,
    build_hemisphere_grid,
    hemisphere_q_integrals,
    lambda_coeff,
    odd_kernel_weights,
)
from ._base import EstimatorConfig, as_sample, phi_times_r, warn
from .directional import DirectionalKDE

_DROP_WARN = 0.05


@dataclass(eq=False)
class SeriesEstimate:
    """Coefficients c_{2p+1}(gamma), p = 0..T, and the odd root they sum to.

    ``root`` is odd on antipodally closed grids; ``reconstructed`` is the
    nonnegative function 2 root 1{root > 0}.
    """

    gamma_grid: SphericalGrid
    T: int
    coefficients: np.ndarray
    root: SphericalFunction
    reconstructed: SphericalFunction
    diagnostics: dict = field(default_factory=dict)

    def mode(self):
        return self.gamma_grid.nodes[int(np.argmax(self.reconstructed.values))]


def projection_sums(d, T, gammas, points, weights, chunk=4_000_000):
    """(T + 1, n_gamma) array of sum_i q_{2p+1,d}(gamma . s_i) weights_i.

    Only the first of each antipodal pair of directions would be needed, but
    the inputs are arbitrary so every direction is evaluated.
    """
    gammas = np.atleast_2d(gammas)
    points = np.atleast_2d(points)
    w = odd_kernel_weights(d, T)
    out = np.zeros((T + 1, gammas.shape[0]))
    step = max(1, chunk // max(points.shape[0], 1))
    mu = (d - 2) / 2.0
    for start in range(0, gammas.shape[0], step):
        t = np.clip(gammas[start : start + step] @ points.T, -1.0, 1.0)
        for k, c in enumerate(_recursion(mu, 2 * T + 1, t)):
            if k % 2 == 1:
                out[k // 2, start : start + step] = w[k // 2] * (c @ weights)
    return out


def _antipodal_projection_sums(d, T, grid, points, weights):
    """projection_sums on a grid, using q(-t) = -q(t) to halve the work."""
    if not grid.antipodal_closed:
        return projection_sums(d, T, grid.nodes, points, weights)
    anti = grid.antipode
    first = np.flatnonzero(np.arange(grid.size) < anti)
    half = projection_sums(d, T, grid.nodes[first], points, weights)
    out = np.empty((T + 1, grid.size))
    out[:, first] = half
    out[:, anti[first]] = -half
    return out


def series_coefficients(dataset, phi="one", gamma_grid=None, T=7, mean_estimate=None, config=None):
    """Estimate c_{2p+1}(gamma) for p <= T and the odd root on ``gamma_grid``.

    c_{2p+1}(gamma) = 2/n sum_i q_{2p+1}(gamma . S_i) phi(Y_i) R_i / f_S(S_i)
                      - mean_estimate * int_{H+} q_{2p+1}(gamma . s) ds

    where f_S is a reflected von Mises-Fisher estimate of the density of S on
    H+. Units where f_S falls below ``density_floor * max f_S`` contribute
    nothing; their count is reported and a warning is issued above 5%.
    """
    if T < 0:
        raise DomainError(f"truncation must be >= 0, got {T}")
    if mean_estimate is None:
        raise DomainError("mean_estimate is required (see mean_at_boundary)")
    config = EstimatorConfig.from_dict(config) if isinstance(config, dict) else (config or EstimatorConfig())
    sample = as_sample(dataset, config.x_cell)
    S = normalize_instruments(sample.z)
    n, d = S.shape
    gamma_grid = gamma_grid or build_grid(d, 32)
    if gamma_grid.d != d:
        raise DomainError("gamma grid dimension does not match the instruments")
    kde = DirectionalKDE(config.density_bandwidth, "hemisphere").fit(S)
    dens = kde.density(S)
    floor = config.density_floor * float(kde.field_.max())
    keep = dens >= floor
    dropped = int(n - keep.sum())
    if dropped > _DROP_WARN * n:
        warn(f"{dropped} of {n} units fall below the density floor and were dropped")
    target = phi_times_r(phi, sample.y, sample.r)
    use = keep & (target != 0)
    weights = target[use] / dens[use]
    sums = _antipodal_projection_sums(d, T, gamma_grid, S[use], weights)
    half = build_hemisphere_grid(d, max(64, 4 * T + 8))
    hq = hemisphere_q_integrals(d, T, gamma_grid.nodes, half)
    coefficients = 2.0 * sums / n - float(mean_estimate) * hq
    lam = np.array([lambda_coeff(d, p) for p in range(T + 1)])
    root_values = (coefficients / lam[:, None]).sum(axis=0)
    if gamma_grid.antipodal_closed:
        # remove rounding asymmetry so that the root is odd to machine precision
        root_values = 0.5 * (root_values - root_values[gamma_grid.antipode])
    root = SphericalFunction(gamma_grid, root_values, metadata={"T": int(T)})
    return SeriesEstimate(
        gamma_grid,
        int(T),
        coefficients,
        root,
        reconstruct_from_odd(root),
        diagnostics={
            "n": int(n),
            "dropped": dropped,
            "density_bandwidth": kde.bandwidth_,
            "mean_estimate": float(mean_estimate),
        },
    )
