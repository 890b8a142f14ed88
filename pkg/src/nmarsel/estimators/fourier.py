"""Fourier inversion for the reparametrised design R = 1{V > Theta + Gbar Zbar}."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from ..exceptions import ConfigError, DomainError
from ._base import EstimatorConfig, as_sample, phi_times_r
from .local import local_linear_nd


@dataclass(frozen=True)
class FourierGrids:
    """Grids of the three steps.

    ``v`` and ``zbar`` carry the local derivative estimates, ``n_s`` and
    ``n_zeta`` points span [-cutoff, cutoff] and [-zeta_max, zeta_max] in the
    frequency plane and ``theta`` x ``gbar`` is the output grid. Unset
    entries are derived from the data.
    """

    v: Optional[np.ndarray] = None
    zbar: Optional[np.ndarray] = None
    n_s: int = 129
    n_zeta: int = 129
    zeta_max: Optional[float] = None
    theta: Optional[np.ndarray] = None
    gbar: Optional[np.ndarray] = None

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        for key in ("v", "zbar", "theta", "gbar"):
            if data.get(key) is not None:
                data[key] = np.asarray(data[key], dtype=float)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"invalid Fourier grids: {exc}") from None


@dataclass(eq=False)
class FourierEstimate:
    """Estimate of E[phi(Y) | Theta, Gbar] f(Theta, Gbar) on a (theta, gbar) grid."""

    theta: np.ndarray
    gbar: np.ndarray
    values: np.ndarray
    cutoff: float
    slice_s0: np.ndarray
    zbar: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def integral(self):
        return float(np.trapezoid(np.trapezoid(self.values, self.gbar, axis=1), self.theta))


def raised_cosine(radius, cutoff, taper=1.0):
    """Radial low-pass window: 1 up to (1 - taper) cutoff, cosine roll-off to 0 at cutoff.

    ``taper = 1`` is the plain raised cosine 0.5 (1 + cos(pi r / cutoff)).
    """
    if not 0.0 < taper <= 1.0:
        raise ConfigError("taper must lie in (0, 1]")
    x = np.asarray(radius, dtype=float) / cutoff
    edge = 1.0 - taper
    roll = 0.5 * (1.0 + np.cos(np.pi * np.clip((x - edge) / taper, 0.0, 1.0)))
    return np.where(x < 1.0, np.where(x <= edge, 1.0, roll), 0.0)


def _fill_columns(b, s, zbar, zeta):
    """Resample b(s, zbar) at zeta = s zbar onto a regular zeta grid.

    Rows with s != 0 are interpolated in zbar = zeta / s. Frequencies outside
    the observed cone |zeta| <= |s| max|zbar| are filled by a cubic spline in
    s through the observed frequencies at the same zeta.
    """
    out = np.full((s.size, zeta.size), np.nan, dtype=complex)
    for i, si in enumerate(s):
        if si == 0:
            continue
        zz = zeta / si
        inside = (zz >= zbar[0]) & (zz <= zbar[-1])
        out[i, inside] = np.interp(zz[inside], zbar, b[i].real) + 1j * np.interp(zz[inside], zbar, b[i].imag)
    zero = np.flatnonzero(s == 0)
    if zero.size:
        out[zero[0], np.abs(zeta) < 1e-12] = b[zero[0]].mean()
    for j in range(zeta.size):
        col = out[:, j]
        known = ~np.isnan(col.real)
        if known.all():
            continue
        if known.sum() < 4:
            out[:, j] = 0.0
            continue
        col[~known] = CubicSpline(s[known], col[known])(s[~known])
        out[:, j] = col
    return out


def fourier_root(dataset, phi="one", grids=None, cutoff=8.0, config=None, taper=0.5):
    """Recover E[phi(Y) | Theta, Gbar] f(Theta, Gbar) in three steps.

    1. a(v; zbar) = d/dv E[phi(Y) R | V = v, Zbar = zbar] by local linear
       regression in (V, Zbar).
    2. b(s, zbar) = int exp(i s v) a(v; zbar) dv, a discrete Fourier sum in v.
    3. b(s, zbar) is the joint transform at (s, s zbar); it is moved to a
       regular (s, zeta) grid, multiplied by a raised-cosine window of radius
       ``cutoff`` (rolling off over the outer ``taper`` fraction) and inverted.
    """
    if not cutoff > 0:
        raise ConfigError("cutoff must be positive")
    config = EstimatorConfig.from_dict(config) if isinstance(config, dict) else (config or EstimatorConfig())
    grids = FourierGrids.from_dict(grids) if isinstance(grids, dict) or grids is None else grids
    sample = as_sample(dataset, config.x_cell)
    if sample.z.shape[1] != 2:
        raise DomainError("the reparametrised design needs instruments (V, Zbar) with scalar Zbar")
    V, Zb = sample.z[:, 0], sample.z[:, 1]
    target = phi_times_r(phi, sample.y, sample.r)

    v = grids.v if grids.v is not None else np.linspace(*np.quantile(V, [0.01, 0.99]), 96)
    zbar = grids.zbar if grids.zbar is not None else np.linspace(*np.quantile(Zb, [0.02, 0.98]), 25)
    v, zbar = np.sort(np.asarray(v, float)), np.sort(np.asarray(zbar, float))
    zmax = float(np.max(np.abs(zbar)))
    zeta_max = grids.zeta_max if grids.zeta_max is not None else cutoff * zmax
    if cutoff * zmax > zeta_max * (1 + 1e-12):
        raise ConfigError(
            f"zeta grid too small for the change of variables: need zeta_max >= {cutoff * zmax:.4g}"
        )

    # step 1
    vv, zz = np.meshgrid(v, zbar, indexing="ij")
    pts = np.column_stack([vv.ravel(), zz.ravel()])
    bw = config.local.bandwidth
    _, grad, widened = local_linear_nd(sample.z, target, pts, bandwidth=bw, kernel=config.local.kernel)
    a = grad[:, 0].reshape(v.size, zbar.size)

    # step 2
    s = np.linspace(-cutoff, cutoff, grids.n_s)
    dv = np.gradient(v)
    b = np.exp(1j * np.outer(s, v)) @ (a * dv[:, None])
    slice_s0 = dv @ a

    # step 3
    zeta = np.linspace(-zeta_max, zeta_max, grids.n_zeta)
    F = _fill_columns(b, s, zbar, zeta)
    S, Zt = np.meshgrid(s, zeta, indexing="ij")
    F = F * raised_cosine(np.hypot(S, Zt), cutoff, taper)
    # enforce F(-s, -zeta) = conj F(s, zeta) so the inverse is real
    F = 0.5 * (F + np.conj(F[::-1, ::-1]))

    theta = grids.theta if grids.theta is not None else np.linspace(-4.0, 4.0, 81)
    gbar = grids.gbar if grids.gbar is not None else np.linspace(-3.0, 3.0, 61)
    theta, gbar = np.asarray(theta, float), np.asarray(gbar, float)
    ds_, dz_ = s[1] - s[0], zeta[1] - zeta[0]
    Et = np.exp(-1j * np.outer(theta, s))
    Eg = np.exp(-1j * np.outer(zeta, gbar))
    out = Et @ F @ Eg * ds_ * dz_ / (4.0 * np.pi**2)
    norm = np.sqrt(np.sum(np.abs(out) ** 2))
    residue = float(np.sqrt(np.sum(out.imag**2)) / norm) if norm > 0 else 0.0
    return FourierEstimate(
        theta,
        gbar,
        out.real,
        float(cutoff),
        slice_s0,
        zbar,
        diagnostics={
            "imag_residue": residue,
            "widened_windows": int(widened.sum()),
            "zeta_max": float(zeta_max),
        },
    )
