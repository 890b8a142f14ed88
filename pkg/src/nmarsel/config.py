"""Turning JSON documents into model parameter objects and estimator options."""

from __future__ import annotations

from .exceptions import ConfigError
from .models import (
    OUTCOMES,
    PROPENSITIES,
    GaussianGroup,
    HeckmanParams,
    Law,
    RandomCoefficientSpec,
    ReparamSpec,
    ThresholdModelSpec,
    simulate_heckman,
    simulate_random_coefficients,
    simulate_reparam,
    simulate_threshold,
)

MODEL_KINDS = ("heckman", "threshold", "random_coefficients", "reparam")


def _get(d, key, path, default=None, required=False):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    return d[key]


def _build(path, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_law(d, path, default=None):
    if d is None:
        return default
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    return _build(path, Law, **d)


def parse_outcome(d, path):
    d = d or {}
    kind = _get(d, "kind", path, "linear")
    if kind not in OUTCOMES:
        raise ConfigError(f"{path}.kind: unknown outcome {kind!r}; choose from {sorted(OUTCOMES)}")
    args = {k: v for k, v in d.items() if k != "kind"}
    return _build(path, OUTCOMES[kind], **args)


def parse_groups(items, path):
    if not isinstance(items, list) or not items:
        raise ConfigError(f"{path}: expected a non-empty list of groups")
    groups = []
    for k, g in enumerate(items):
        p = f"{path}[{k}]"
        groups.append(
            _build(
                p,
                GaussianGroup,
                weight=float(_get(g, "weight", p, required=True)),
                mean=list(_get(g, "mean", p, required=True)),
                cov=[list(row) for row in _get(g, "cov", p, required=True)],
            )
        )
    return groups


def parse_model(d, path="model"):
    """Build a model parameter object from its JSON description."""
    kind = _get(d, "kind", path, required=True)
    if kind == "heckman":
        return _build(
            path,
            HeckmanParams,
            beta=list(_get(d, "beta", path, [0.0])),
            sigma=float(_get(d, "sigma", path, 1.0)),
            gamma=list(_get(d, "gamma", path, [0.0, 1.0])),
            rho=float(_get(d, "rho", path, 0.0)),
            x_law=parse_law(_get(d, "x_law", path), f"{path}.x_law", Law()),
            z_law=parse_law(_get(d, "z_law", path), f"{path}.z_law", Law()),
        )
    if kind == "threshold":
        prop = _get(d, "propensity", path, {}) or {}
        pkind = _get(prop, "kind", f"{path}.propensity", "probit")
        if pkind not in PROPENSITIES:
            raise ConfigError(f"{path}.propensity.kind: unknown propensity {pkind!r}")
        pargs = {k: v for k, v in prop.items() if k != "kind"}
        return _build(
            path,
            ThresholdModelSpec,
            propensity=_build(f"{path}.propensity", PROPENSITIES[pkind], **pargs),
            copula_rho=float(_get(d, "copula_rho", path, 0.0)),
            outcome=parse_outcome(_get(d, "outcome", path), f"{path}.outcome"),
            z_law=parse_law(_get(d, "z_law", path), f"{path}.z_law", Law()),
            x_law=parse_law(_get(d, "x_law", path), f"{path}.x_law"),
        )
    if kind == "random_coefficients":
        return _build(
            path,
            RandomCoefficientSpec,
            groups=parse_groups(_get(d, "groups", path, required=True), f"{path}.groups"),
            z_law=parse_law(_get(d, "z_law", path), f"{path}.z_law", Law("hemisphere")),
            outcome=parse_outcome(_get(d, "outcome", path), f"{path}.outcome"),
            x_law=parse_law(_get(d, "x_law", path), f"{path}.x_law"),
        )
    if kind == "reparam":
        kwargs = dict(
            groups=parse_groups(_get(d, "groups", path, required=True), f"{path}.groups"),
            outcome=parse_outcome(_get(d, "outcome", path), f"{path}.outcome"),
            x_law=parse_law(_get(d, "x_law", path), f"{path}.x_law"),
        )
        for key in ("v_law", "zbar_law"):
            law = parse_law(_get(d, key, path), f"{path}.{key}")
            if law is not None:
                kwargs[key] = law
        return _build(path, ReparamSpec, **kwargs)
    raise ConfigError(f"{path}.kind: unknown model {kind!r}; choose from {MODEL_KINDS}")


def simulate(spec, n, seed):
    """Dispatch to the simulator matching the parameter object type."""
    if isinstance(spec, HeckmanParams):
        return simulate_heckman(spec, n, seed)
    if isinstance(spec, ThresholdModelSpec):
        return simulate_threshold(spec, n, seed)
    if isinstance(spec, RandomCoefficientSpec):
        return simulate_random_coefficients(spec, n, seed)
    if isinstance(spec, ReparamSpec):
        return simulate_reparam(spec, n, seed)
    raise ConfigError(f"cannot simulate from {type(spec).__name__}")
