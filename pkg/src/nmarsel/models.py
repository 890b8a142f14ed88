"""Generative selection models used as ground truth for the estimators.

Every simulator takes an explicit integer seed and draws from a Philox
(counter-based, 64-bit key) generator, so a ``(spec, n, seed)`` triple
always yields the same dataset on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .exceptions import ConfigError, NumericalError, PreconditionError


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def normalize_instruments(z):
    """S = (1, Z) / ||(1, Z)||, a point of the half-sphere s_1 > 0."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    raw = np.column_stack([np.ones(z.shape[0]), z])
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Law:
    """A named distribution for instruments or covariates.

    kind is one of ``normal`` (loc, scale), ``uniform`` (low, high),
    ``cauchy`` (loc, scale), ``hemisphere`` (Z such that (1, Z)/||(1, Z)|| is
    uniform on the half-sphere) and ``constant`` (value).
    """

    kind: str = "normal"
    dim: int = 1
    loc: float = 0.0
    scale: float = 1.0
    low: float = 0.0
    high: float = 1.0
    value: float = 0.0

    def sample(self, rng, n):
        k = self.dim
        if self.kind == "normal":
            return self.loc + self.scale * rng.standard_normal((n, k))
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=(n, k))
        if self.kind == "cauchy":
            return self.loc + self.scale * rng.standard_cauchy((n, k))
        if self.kind == "hemisphere":
            s = rng.standard_normal((n, k + 1))
            s[:, 0] = np.abs(s[:, 0])
            s /= np.linalg.norm(s, axis=1, keepdims=True)
            return s[:, 1:] / s[:, :1]
        if self.kind == "constant":
            return np.full((n, k), float(self.value))
        raise ConfigError(f"unknown law kind {self.kind!r}")

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, Law):
            return data
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"invalid law description: {exc}") from None


# ---------------------------------------------------------------------------
# parameter objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeckmanParams:
    """Y = X'beta + sigma E_Y, R = 1{Z'gamma - E_R > 0}, corr(E_Y, E_R) = rho.

    X and Z carry an intercept in their first column; the remaining columns
    are drawn from ``x_law`` and ``z_law``.
    """

    beta: Sequence[float]
    sigma: float
    gamma: Sequence[float]
    rho: float
    x_law: Law = field(default_factory=Law)
    z_law: Law = field(default_factory=Law)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if abs(self.rho) > 1:
            raise ConfigError("rho must lie in [-1, 1]")
        if len(self.gamma) < 1 or len(self.beta) < 1:
            raise ConfigError("beta and gamma need at least an intercept")


def probit_propensity(intercept=0.0, slope=1.0):
    """pi(z) = Phi(intercept + slope . z)."""
    slope = np.atleast_1d(np.asarray(slope, dtype=float))

    def pi(z):
        return ndtr(intercept + np.atleast_2d(z) @ slope)

    return pi


def linear_outcome(intercept=0.0, slope=(), scale=1.0):
    slope = np.asarray(slope, dtype=float)

    def outcome(x, e):
        base = intercept + (x @ slope if slope.size else 0.0)
        return base + scale * e

    return outcome


def lognormal_outcome(intercept=0.0, slope=(), scale=1.0):
    lin = linear_outcome(intercept, slope, scale)

    def outcome(x, e):
        return np.exp(lin(x, e))

    return outcome


OUTCOMES = {"linear": linear_outcome, "lognormal": lognormal_outcome}
PROPENSITIES = {"probit": probit_propensity}


@dataclass(frozen=True)
class ThresholdModelSpec:
    """R = 1{pi(Z) > H} with H uniform and coupled to the outcome error.

    H = 1 - Phi(U) where (U, E) is standard bivariate normal with correlation
    ``copula_rho``; Y = outcome(X, E). Units with a large U respond more
    easily, so a positive ``copula_rho`` makes respondents' outcomes larger
    when the outcome is increasing in E.
    """

    propensity: Callable
    copula_rho: float = 0.0
    outcome: Callable = field(default_factory=linear_outcome)
    z_law: Law = field(default_factory=Law)
    x_law: Optional[Law] = None

    def __post_init__(self):
        if abs(self.copula_rho) > 1:
            raise ConfigError("copula_rho must lie in [-1, 1]")


@dataclass(frozen=True)
class GaussianGroup:
    """One mixture component: jointly normal (coefficients..., outcome error).

    The last coordinate of ``mean`` / ``cov`` is the outcome error.
    """

    weight: float
    mean: Sequence[float]
    cov: Sequence[Sequence[float]]

    def sample(self, rng, n):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ConfigError("group covariance has the wrong shape")
        # eigen-decomposition tolerates singular (degenerate) covariances
        vals, vecs = np.linalg.eigh(cov)
        if np.any(vals < -1e-10):
            raise ConfigError("group covariance is not positive semidefinite")
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
        return mean + rng.standard_normal((n, mean.size)) @ root.T


def _check_groups(groups):
    w = np.array([g.weight for g in groups], dtype=float)
    if len(groups) == 0 or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ConfigError("mixture weights must be positive and sum to 1")


@dataclass(frozen=True)
class RandomCoefficientSpec:
    """R = 1{A + B'Z > 0} with (A, B, E) from a Gaussian mixture, Y = outcome(X, E)."""

    groups: Sequence[GaussianGroup]
    z_law: Law = field(default_factory=lambda: Law("hemisphere"))
    outcome: Callable = field(default_factory=linear_outcome)
    x_law: Optional[Law] = None

    def __post_init__(self):
        _check_groups(self.groups)
        d = self.z_law.dim + 1
        for g in self.groups:
            if len(g.mean) != d + 1:
                raise ConfigError(f"each group needs d + 1 = {d + 1} coordinates (A, B, E)")

    @property
    def d(self):
        return self.z_law.dim + 1


@dataclass(frozen=True)
class ReparamSpec:
    """R = 1{V - Theta - Gbar'Zbar > 0}; (Theta, Gbar, E) from a Gaussian mixture."""

    groups: Sequence[GaussianGroup]
    v_law: Law = field(default_factory=lambda: Law("uniform", low=-6.0, high=6.0))
    zbar_law: Law = field(default_factory=lambda: Law("uniform", low=-3.0, high=3.0))
    outcome: Callable = field(default_factory=linear_outcome)
    x_law: Optional[Law] = None

    def __post_init__(self):
        _check_groups(self.groups)
        for g in self.groups:
            if len(g.mean) != self.zbar_law.dim + 2:
                raise ConfigError("each group needs (Theta, Gbar..., E) coordinates")


@dataclass(eq=False)
class SimulatedDataset:
    """Per-unit records with the latent variables kept for oracle checks.

    ``y`` is NaN for nonrespondents; the full outcome lives in
    ``latent["y"]``.
    """

    y: np.ndarray
    r: np.ndarray
    z: np.ndarray
    x: np.ndarray
    latent: dict
    seed: int
    model: str
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.r.shape[0]
        if self.weight is None:
            self.weight = np.ones(n)

    def __len__(self):
        return self.r.shape[0]

    @property
    def n(self):
        return self.r.shape[0]

    @property
    def s(self):
        return normalize_instruments(self.z)

    def subset(self, idx):
        idx = np.asarray(idx)
        return SimulatedDataset(
            self.y[idx],
            self.r[idx],
            self.z[idx],
            self.x[idx],
            {k: v[idx] for k, v in self.latent.items()},
            self.seed,
            self.model,
            self.weight[idx],
        )


def _finish(y_full, r, z, x, latent, seed, model):
    r = r.astype(int)
    y = np.where(r == 1, y_full, np.nan)
    latent = dict(latent)
    latent["y"] = y_full
    return SimulatedDataset(y, r, z, x, latent, int(seed), model)


def _draw_x(law, rng, n):
    return np.empty((n, 0)) if law is None else law.sample(rng, n)


# ---------------------------------------------------------------------------
# simulators
# ---------------------------------------------------------------------------


def simulate_heckman(params, n, seed):
    """Draw n units from the Heckman selection model."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    rng = make_rng(seed)
    kx, kz = len(params.beta) - 1, len(params.gamma) - 1
    x_extra = Law(**{**params.x_law.__dict__, "dim": kx}).sample(rng, n) if kx else np.empty((n, 0))
    z_extra = Law(**{**params.z_law.__dict__, "dim": kz}).sample(rng, n) if kz else np.empty((n, 0))
    e = rng.standard_normal((n, 2))
    rho = params.rho
    e_y = e[:, 0]
    e_r = rho * e[:, 0] + np.sqrt(1.0 - rho**2) * e[:, 1]
    X = np.column_stack([np.ones(n), x_extra])
    Z = np.column_stack([np.ones(n), z_extra])
    index = Z @ np.asarray(params.gamma, dtype=float)
    y_full = X @ np.asarray(params.beta, dtype=float) + params.sigma * e_y
    r = index - e_r > 0
    latent = {"e_y": e_y, "e_r": e_r, "index": index, "propensity": ndtr(index)}
    return _finish(y_full, r, z_extra, x_extra, latent, seed, "heckman")


def _threshold_latents(spec, rng, n):
    e = rng.standard_normal((n, 2))
    rho = spec.copula_rho
    u = e[:, 0]
    err = rho * u + np.sqrt(1.0 - rho**2) * e[:, 1]
    return ndtr(-u), err


def simulate_threshold(spec, n, seed):
    """R = 1{pi(Z) > H}; Z is drawn independently of (H, Y) given X."""
    rng = make_rng(seed)
    x = _draw_x(spec.x_law, rng, n)
    z = spec.z_law.sample(rng, n)
    h, err = _threshold_latents(spec, rng, n)
    pi = np.asarray(spec.propensity(z), dtype=float)
    if np.any((pi < 0) | (pi > 1)):
        raise ConfigError("propensity values must lie in [0, 1]")
    r = pi > h
    y_full = np.asarray(spec.outcome(x, err), dtype=float)
    latent = {"h": h, "error": err, "propensity": pi}
    return _finish(y_full, r, z, x, latent, seed, "threshold")


def _mixture_draw(groups, rng, n):
    w = np.array([g.weight for g in groups])
    label = rng.choice(len(groups), size=n, p=w / w.sum())
    width = len(groups[0].mean)
    out = np.empty((n, width))
    for k, g in enumerate(groups):
        idx = np.flatnonzero(label == k)
        out[idx] = g.sample(rng, idx.size)
    return out, label


def _draw_coefficients(spec, rng, n, max_rounds=100):
    coef, label = _mixture_draw(spec.groups, rng, n)
    d = spec.d
    for _ in range(max_rounds):
        bad = np.flatnonzero(np.all(coef[:, :d] == 0.0, axis=1))
        if bad.size == 0:
            return coef, label
        coef[bad], label[bad] = _mixture_draw(spec.groups, rng, bad.size)
    raise NumericalError("coefficient law puts positive mass on (A, B) = 0")


def simulate_random_coefficients(spec, n, seed):
    """R = 1{A + B'Z > 0}; also returns the normalised Gamma and S."""
    rng = make_rng(seed)
    d = spec.d
    x = _draw_x(spec.x_law, rng, n)
    coef, label = _draw_coefficients(spec, rng, n)
    z = spec.z_law.sample(rng, n)
    a, b, err = coef[:, 0], coef[:, 1:d], coef[:, d]
    r = a + np.sum(b * z, axis=1) > 0
    ab = coef[:, :d]
    gamma = ab / np.linalg.norm(ab, axis=1, keepdims=True)
    y_full = np.asarray(spec.outcome(x, err), dtype=float)
    latent = {"gamma": gamma, "a": a, "b": b, "error": err, "group": label}
    return _finish(y_full, r, z, x, latent, seed, "random_coefficients")


def simulate_reparam(spec, n, seed):
    """R = 1{V - Theta - Gbar'Zbar > 0}; the z columns are (V, Zbar...)."""
    rng = make_rng(seed)
    x = _draw_x(spec.x_law, rng, n)
    coef, label = _mixture_draw(spec.groups, rng, n)
    v = spec.v_law.sample(rng, n)[:, 0]
    zbar = spec.zbar_law.sample(rng, n)
    k = zbar.shape[1]
    theta, gbar, err = coef[:, 0], coef[:, 1 : 1 + k], coef[:, 1 + k]
    r = v - theta - np.sum(gbar * zbar, axis=1) > 0
    y_full = np.asarray(spec.outcome(x, err), dtype=float)
    z = np.column_stack([v, zbar])
    latent = {"theta": theta, "gbar": gbar, "error": err, "group": label}
    return _finish(y_full, r, z, x, latent, seed, "reparam")


def latent_indicator(dataset):
    """Recompute R from the stored latent record."""
    lat = dataset.latent
    if dataset.model == "heckman":
        return (lat["index"] - lat["e_r"] > 0).astype(int)
    if dataset.model == "threshold":
        return (lat["propensity"] > lat["h"]).astype(int)
    if dataset.model == "random_coefficients":
        s = normalize_instruments(dataset.z)
        return (np.sum(lat["gamma"] * s, axis=1) > 0).astype(int)
    if dataset.model == "reparam":
        v, zbar = dataset.z[:, 0], dataset.z[:, 1:]
        return (v - lat["theta"] - np.sum(lat["gbar"] * zbar, axis=1) > 0).astype(int)
    raise ConfigError(f"unknown model {dataset.model!r}")


def classify_response_types(spec, z, z_prime, n, seed):
    """Monte Carlo shares of response types for an exogenous shift z -> z'.

    Latent variables are drawn once and held fixed. Returns a dict with
    ``always``, ``never``, ``complier`` (responds only under z') and
    ``defier`` (responds only under z).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z_prime = np.atleast_1d(np.asarray(z_prime, dtype=float))
    rng = make_rng(seed)
    if isinstance(spec, ThresholdModelSpec):
        h, _ = _threshold_latents(spec, rng, n)
        r0 = float(np.asarray(spec.propensity(z[None, :])).ravel()[0]) > h
        r1 = float(np.asarray(spec.propensity(z_prime[None, :])).ravel()[0]) > h
    elif isinstance(spec, RandomCoefficientSpec):
        coef, _ = _draw_coefficients(spec, rng, n)
        d = spec.d
        a, b = coef[:, 0], coef[:, 1:d]
        r0 = a + b @ z > 0
        r1 = a + b @ z_prime > 0
    elif isinstance(spec, ReparamSpec):
        coef, _ = _mixture_draw(spec.groups, rng, n)
        k = spec.zbar_law.dim
        theta, gbar = coef[:, 0], coef[:, 1 : 1 + k]
        r0 = z[0] - theta - gbar @ z[1:] > 0
        r1 = z_prime[0] - theta - gbar @ z_prime[1:] > 0
    else:
        raise ConfigError(f"unsupported model object {type(spec).__name__}")
    counts = {
        "always": np.count_nonzero(r0 & r1),
        "never": np.count_nonzero(~r0 & ~r1),
        "complier": np.count_nonzero(~r0 & r1),
        "defier": np.count_nonzero(r0 & ~r1),
    }
    return {k: v / n for k, v in counts.items()}
