"""Special functions and quadrature on the unit sphere S^{d-1}, d in {2, 3}.

Points are stored as unit vectors in R^d. The first coordinate is the
distinguished axis: the half-sphere ``H+ = {s : s_1 >= 0}`` and the polar
axis of the d = 3 product grid both refer to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import CapabilityError, DomainError

SUPPORTED_DIMS = (2, 3)
_T_TOL = 1e-12


def sphere_area(d):
    """Surface measure |S^{d-1}| of the unit sphere in R^d (|S^0| = 2)."""
    if d < 1:
        raise DomainError(f"sphere dimension must be >= 1, got d={d}")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _check_dim(d):
    if d not in SUPPORTED_DIMS:
        raise CapabilityError(f"only d in {SUPPORTED_DIMS} is supported, got d={d}")


# ---------------------------------------------------------------------------
# Gegenbauer polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GegenbauerBasis:
    """Gegenbauer polynomials C_k^mu, mu = (d - 2) / 2, up to degree ``kmax``."""

    d: int
    kmax: int

    def __post_init__(self):
        if self.d < 2:
            raise DomainError(f"d must be >= 2, got {self.d}")
        if self.kmax < 0:
            raise DomainError(f"kmax must be >= 0, got {self.kmax}")

    @property
    def mu(self):
        return Fraction(self.d - 2, 2)

    @classmethod
    def for_truncation(cls, d, T):
        """Basis large enough for an odd series truncated at index ``T``."""
        return cls(d=d, kmax=2 * T + 1)


def _recursion(mu, kmax, t):
    """Yield C_0^mu(t), ..., C_kmax^mu(t).

    For mu = 0 the normalisation C_1^0 = 2t is the limit of C_k^mu / mu, which
    makes C_k^0 = (2 / k) T_k for k >= 1. The first step of the three-term
    recursion then has to use lim (2 mu) C_0^mu / mu = 2 instead of 0.
    """
    c_prev = np.ones_like(t)
    yield c_prev
    if kmax == 0:
        return
    c_curr = 2.0 * t if mu == 0 else 2.0 * mu * t
    yield c_curr
    for k in range(0, kmax - 1):
        a = 2.0 * (mu + k + 1)
        b = 2.0 if (mu == 0 and k == 0) else (2.0 * mu + k)
        c_next = (a * t * c_curr - b * c_prev) / (k + 2)
        yield c_next
        c_prev, c_curr = c_curr, c_next


def gegenbauer_all(mu, kmax, t):
    """Array of shape ``(kmax + 1,) + t.shape`` with C_k^mu(t) for k <= kmax."""
    t = np.asarray(t, dtype=float)
    return np.stack(list(_recursion(float(mu), kmax, t)))


def gegenbauer_eval(basis, k, t):
    """C_k^mu(t) by the three-term recursion.

    Parameters
    ----------
    basis : GegenbauerBasis
    k : int
        Degree, at most ``basis.kmax``.
    t : float or array_like
        Points in [-1, 1].
    """
    if k < 0:
        raise DomainError(f"degree must be >= 0, got {k}")
    if k > basis.kmax:
        raise CapabilityError(f"degree {k} exceeds kmax={basis.kmax}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(np.abs(t_arr) > 1.0 + _T_TOL):
        raise DomainError("Gegenbauer evaluation requires |t| <= 1")
    value = None
    for j, c in enumerate(_recursion(float(basis.mu), k, t_arr)):
        if j == k:
            value = c
    return float(value) if np.ndim(value) == 0 else value


def gegenbauer_at_one(mu, k):
    return float(gegenbauer_all(mu, k, np.array(1.0))[k])


def harmonic_dimension(k, d):
    """L(k, d): dimension of the degree-k spherical harmonics on S^{d-1}."""
    if k == 0:
        return 1.0
    num = (2 * k + d - 2) * math.factorial(k + d - 2)
    den = math.factorial(k) * math.factorial(d - 2) * (k + d - 2)
    return num / den


def q_eval(basis, k, t):
    """Reproducing kernel q_{k,d}(t) = L(k,d) C_k(t) / (|S^{d-1}| C_k(1)), k odd."""
    if k % 2 != 1:
        raise DomainError(f"q_eval is defined for odd degrees only, got k={k}")
    d = basis.d
    mu = float(basis.mu)
    ck = gegenbauer_eval(basis, k, t)
    return harmonic_dimension(k, d) * ck / (sphere_area(d) * gegenbauer_at_one(mu, k))


def lambda_coeff(d, p):
    """Eigenvalue of the hemispherical transform on degree 2p+1 harmonics."""
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    if p < 0:
        raise DomainError(f"p must be >= 0, got {p}")
    value = sphere_area(d - 1) / (d - 1)
    for j in range(1, p + 1):
        # ratio between consecutive terms: -(2j - 1) / (d + 2j - 1)
        value *= -(2 * j - 1) / (d + 2 * j - 1)
    return value


@dataclass(frozen=True)
class SeriesCoefficients:
    d: int
    values: np.ndarray

    @classmethod
    def compute(cls, d, T):
        return cls(d=d, values=np.array([lambda_coeff(d, p) for p in range(T + 1)]))


def odd_kernel_weights(d, T, coeffs=None):
    """Weights w_p such that sum_p coeffs_p q_{2p+1}(t) = sum_p w_p C_{2p+1}(t).

    ``coeffs`` defaults to ones.
    """
    mu = (d - 2) / 2.0
    kmax = 2 * T + 1
    at_one = gegenbauer_all(mu, kmax, np.array(1.0))
    area = sphere_area(d)
    w = np.empty(T + 1)
    for p in range(T + 1):
        k = 2 * p + 1
        w[p] = harmonic_dimension(k, d) / (area * at_one[k])
    if coeffs is not None:
        w = w * np.asarray(coeffs, dtype=float)
    return w


def odd_series_terms(d, T, t):
    """Array ``(T + 1,) + t.shape`` of q_{2p+1,d}(t) for p = 0..T.

    ``t`` is clipped to [-1, 1] to absorb rounding in inner products.
    """
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    w = odd_kernel_weights(d, T)
    out = np.empty((T + 1,) + t.shape)
    for k, c in enumerate(_recursion((d - 2) / 2.0, 2 * T + 1, t)):
        if k % 2 == 1:
            p = k // 2
            out[p] = w[p] * c
    return out


def odd_series_kernel(d, T, t, coeffs):
    """sum_p coeffs[p] q_{2p+1,d}(t), evaluated without storing every degree."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    w = odd_kernel_weights(d, T, coeffs)
    acc = np.zeros_like(t)
    for k, c in enumerate(_recursion((d - 2) / 2.0, 2 * T + 1, t)):
        if k % 2 == 1:
            acc += w[k // 2] * c
    return acc


# ---------------------------------------------------------------------------
# Quadrature grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Quadrature nodes and weights (surface measure) on S^{d-1}.

    ``layout`` is ``"circle"`` (equal angles, d = 2), ``"product"``
    (Gauss-Legendre in s_1 times uniform azimuth, d = 3) or ``"custom"``.
    ``antipode[i]`` is the index of ``-nodes[i]`` or -1 when the grid is not
    closed under the antipodal map.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    layout: str = "custom"
    shape: tuple = ()
    antipode: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != self.d:
            raise DomainError(f"nodes must have shape (N, {self.d})")
        if weights.shape != (nodes.shape[0],):
            raise DomainError("one weight per node is required")
        if np.any(weights <= 0):
            raise DomainError("quadrature weights must be positive")
        norms = np.linalg.norm(nodes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise DomainError("grid nodes must be unit vectors")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.antipode is None:
            object.__setattr__(self, "antipode", _find_antipodes(nodes))

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def antipodal_closed(self):
        return bool(np.all(self.antipode >= 0))

    def integrate(self, values):
        """Quadrature of ``values`` (last axis runs over nodes)."""
        return np.asarray(values, dtype=float) @ self.weights

    @property
    def cell_size(self):
        """Linear size of the cell around each node, weight ** (1 / (d - 1))."""
        return self.weights ** (1.0 / (self.d - 1))

    def azimuth_rings(self):
        """(n_rings, n_az) when nodes are rings of a shared uniform azimuth grid."""
        if self.layout in ("circle",):
            return 1, self.shape[0]
        if self.layout in ("product", "half-product"):
            return self.shape
        return None

    def angles(self):
        """Angular coordinates: theta for d = 2, (polar, azimuth) for d = 3."""
        x = self.nodes
        if self.d == 2:
            return np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
        polar = np.arccos(np.clip(x[:, 0], -1, 1))
        azim = np.mod(np.arctan2(x[:, 2], x[:, 1]), 2 * np.pi)
        return polar, azim

    def interpolate(self, values, points):
        """Interpolate node values at arbitrary unit vectors.

        Linear in angle on ``circle`` grids, bilinear in (polar, azimuth) on
        ``product`` grids and nearest-node otherwise.
        """
        values = np.asarray(values, dtype=float)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.layout == "circle":
            n = self.size
            theta = self.angles()
            order = np.argsort(theta)
            th, v = theta[order], values[order]
            th_ext = np.concatenate([th[-1:] - 2 * np.pi, th, th[:1] + 2 * np.pi])
            v_ext = np.concatenate([v[-1:], v, v[:1]])
            q = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
            assert th_ext.size == n + 2
            return np.interp(q, th_ext, v_ext)
        if self.layout == "product":
            n_pol, n_az = self.shape
            table = values.reshape(n_pol, n_az)
            polar, azim = self.angles()
            pol_nodes = polar.reshape(n_pol, n_az)[:, 0]
            az0 = azim.reshape(n_pol, n_az)[0, 0]
            daz = 2 * np.pi / n_az
            qp = np.arccos(np.clip(points[:, 0], -1, 1))
            qa = np.mod(np.arctan2(points[:, 2], points[:, 1]), 2 * np.pi)
            # pol_nodes ascend in polar angle
            i = np.clip(np.searchsorted(pol_nodes, qp) - 1, 0, n_pol - 2)
            fp = np.clip((qp - pol_nodes[i]) / (pol_nodes[i + 1] - pol_nodes[i]), 0.0, 1.0)
            pos = np.mod(qa - az0, 2 * np.pi) / daz
            j = np.floor(pos).astype(int) % n_az
            fa = pos - np.floor(pos)
            j1 = (j + 1) % n_az
            lo = table[i, j] * (1 - fa) + table[i, j1] * fa
            hi = table[i + 1, j] * (1 - fa) + table[i + 1, j1] * fa
            return lo * (1 - fp) + hi * fp
        from scipy.spatial import cKDTree

        _, idx = cKDTree(self.nodes).query(points)
        return values[idx]


def _find_antipodes(nodes, tol=1e-10):
    from scipy.spatial import cKDTree

    dist, idx = cKDTree(nodes).query(-nodes)
    idx = np.asarray(idx, dtype=int)
    idx[dist > tol] = -1
    return idx


def build_grid(d, resolution):
    """Quadrature grid on S^{d-1}.

    d = 2: ``resolution`` equally spaced angles with weights 2 pi / n.
    d = 3: ``resolution`` Gauss-Legendre nodes in s_1 times ``2 * resolution``
    uniform azimuths. Both layouts are closed under s -> -s when the
    resolution is even.
    """
    _check_dim(d)
    if resolution < 8:
        raise DomainError(f"resolution must be >= 8, got {resolution}")
    if d == 2:
        n = int(resolution)
        theta = 2 * np.pi * (np.arange(n) + 0.5) / n
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        weights = np.full(n, 2 * np.pi / n)
        antipode = (np.arange(n) + n // 2) % n if n % 2 == 0 else None
        return SphericalGrid(2, nodes, weights, "circle", (n,), antipode)
    n_pol = int(resolution)
    n_az = 2 * n_pol
    x, wx = leggauss(n_pol)
    x, wx = x[::-1], wx[::-1]  # ascending polar angle
    phi = 2 * np.pi * (np.arange(n_az) + 0.5) / n_az
    sin_pol = np.sqrt(1.0 - x**2)
    nodes = np.empty((n_pol, n_az, 3))
    nodes[..., 0] = x[:, None]
    nodes[..., 1] = sin_pol[:, None] * np.cos(phi)[None, :]
    nodes[..., 2] = sin_pol[:, None] * np.sin(phi)[None, :]
    nodes = nodes.reshape(-1, 3)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    weights = np.outer(wx, np.full(n_az, 2 * np.pi / n_az)).ravel()
    antipode = None
    if n_pol % 2 == 0:
        ii, jj = np.meshgrid(np.arange(n_pol), np.arange(n_az), indexing="ij")
        antipode = ((n_pol - 1 - ii) * n_az + (jj + n_pol) % n_az).ravel()
    return SphericalGrid(3, nodes, weights, "product", (n_pol, n_az), antipode)


def build_hemisphere_grid(d, resolution):
    """Gauss grid covering only H+ = {s_1 >= 0}.

    Integrands that are smooth on the closed half-sphere are integrated
    spectrally, which the full grid cannot do across the kink at s_1 = 0.
    """
    _check_dim(d)
    if resolution < 8:
        raise DomainError(f"resolution must be >= 8, got {resolution}")
    if d == 2:
        u, wu = leggauss(int(resolution))
        theta = 0.5 * np.pi * u
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        return SphericalGrid(2, nodes, 0.5 * np.pi * wu, "half-circle", (int(resolution),))
    n_pol = int(resolution)
    n_az = 2 * n_pol
    u, wu = leggauss(n_pol)
    x = 0.5 * (u[::-1] + 1.0)
    wx = 0.5 * wu[::-1]
    phi = 2 * np.pi * (np.arange(n_az) + 0.5) / n_az
    sin_pol = np.sqrt(1.0 - x**2)
    nodes = np.empty((n_pol, n_az, 3))
    nodes[..., 0] = x[:, None]
    nodes[..., 1] = sin_pol[:, None] * np.cos(phi)[None, :]
    nodes[..., 2] = sin_pol[:, None] * np.sin(phi)[None, :]
    nodes = nodes.reshape(-1, 3)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    weights = np.outer(wx, np.full(n_az, 2 * np.pi / n_az)).ravel()
    return SphericalGrid(3, nodes, weights, "half-product", (n_pol, n_az))


def zonal_apply(kernel, src, tgt, fw, chunk=2_000_000):
    """out[i] = sum_j kernel(tgt_i . src_j, j) fw[j].

    ``kernel(t, cols)`` receives inner products of shape (m, len(cols)) and
    the source indices. When both grids are rings over the same uniform
    azimuth grid only one target per ring is evaluated and the azimuthal
    sum is a circular correlation done by FFT.
    """
    fw = np.asarray(fw, dtype=float)
    src_rings, tgt_rings = src.azimuth_rings(), tgt.azimuth_rings()
    cols = np.arange(src.size)
    if (
        src_rings is not None
        and tgt_rings is not None
        and src_rings[1] == tgt_rings[1]
        and src.layout in ("circle", "product")
        and (tgt.layout == src.layout or (src.layout == "product" and tgt.layout == "half-product"))
    ):
        n_src_rings, n_az = src_rings
        n_tgt_rings = tgt_rings[0]
        reps = tgt.nodes.reshape(n_tgt_rings, n_az, -1)[:, 0, :]
        kmat = kernel(reps @ src.nodes.T, cols).reshape(n_tgt_rings, n_src_rings, n_az)
        ff = np.fft.rfft(fw.reshape(n_src_rings, n_az), axis=-1)
        fk = np.fft.rfft(kmat, axis=-1)
        spec = np.einsum("abk,bk->ak", np.conj(fk), ff)
        return np.fft.irfft(spec, n=n_az, axis=-1).ravel()
    out = np.empty(tgt.size)
    step = max(1, chunk // src.size)
    for start in range(0, tgt.size, step):
        t = tgt.nodes[start : start + step] @ src.nodes.T
        out[start : start + step] = kernel(t, cols) @ fw
    return out


def half_indicator(x, width=None):
    """Smoothed indicator of x >= 0 with value 1/2 at x = 0.

    With ``width`` the step is a linear ramp over [-width/2, width/2], the
    fraction of a cell of that size lying on the positive side. The ramp is
    antisymmetric around 1/2 so that h(x) + h(-x) = 1.
    """
    x = np.asarray(x, dtype=float)
    if width is None:
        out = (x > 0).astype(float)
        out[np.abs(x) <= 1e-13] = 0.5
        return out
    return np.clip(0.5 + x / width, 0.0, 1.0)


def hemisphere_q_integral(d, p, gamma, grid):
    """Quadrature of the integral of q_{2p+1,d}(gamma . s) over H+ = {s_1 >= 0}."""
    gamma = np.asarray(gamma, dtype=float)
    if abs(np.linalg.norm(gamma) - 1.0) > 1e-10:
        raise DomainError("gamma must be a unit vector")
    return float(hemisphere_q_integrals(d, p, gamma[None, :], grid)[p, 0])


def hemisphere_q_integrals(d, T, gammas, grid):
    """Array ``(T + 1, n_gamma)`` of H+ integrals of q_{2p+1,d}(gamma . s)."""
    if grid.d != d:
        raise DomainError("grid dimension does not match d")
    mask = half_indicator(grid.nodes[:, 0])
    keep = mask > 0
    s = grid.nodes[keep]
    w = (grid.weights * mask)[keep]
    gammas = np.atleast_2d(gammas)
    out = np.zeros((T + 1, gammas.shape[0]))
    for start in range(0, gammas.shape[0], 256):
        g = gammas[start : start + 256]
        terms = odd_series_terms(d, T, g @ s.T)
        out[:, start : start + 256] = terms @ w
    return out


def geodesic_distance(a, b):
    """Great-circle distance between unit vectors (broadcasting)."""
    dot = np.sum(np.asarray(a) * np.asarray(b), axis=-1)
    return np.arccos(np.clip(dot, -1.0, 1.0))
