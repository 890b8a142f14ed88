"""Outer Monte Carlo harness: population, sample, impute, check coverage."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .config import parse_model, simulate
from .exceptions import ConfigError, NmarselError
from .frame import SurveyFrame
from .models import make_rng
from .survey import bootstrap_variance, multiple_impute, replicate_seeds, weighted_gini


@dataclass(frozen=True)
class ExperimentSettings:
    model: object
    n: int
    population_size: int
    reps: int
    seed: int
    impute_model: str
    T: int
    alpha: float
    B: int
    estimator: dict
    naive: bool

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("experiment: expected an object")
        try:
            n = int(d.get("n", 1000))
            imp = dict(d.get("impute", {}))
            out = cls(
                model=parse_model(d.get("model"), "model"),
                n=n,
                population_size=int(d.get("population_size", 10 * n)),
                reps=int(d.get("reps", 10)),
                seed=int(d.get("seed", 0)),
                impute_model=str(imp.get("model", "threshold")),
                T=int(imp.get("T", 20)),
                alpha=float(imp.get("alpha", 0.1)),
                B=int(imp.get("B", 50)),
                estimator=dict(imp.get("estimator", {})),
                naive=bool(d.get("naive", True)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"experiment: {exc}") from None
        if out.reps < 1:
            raise ConfigError("experiment.reps: must be >= 1")
        if not 1 <= out.n <= out.population_size:
            raise ConfigError("experiment.n: must lie between 1 and population_size")
        return out


def draw_sample(population, n, rng):
    """Simple random sample without replacement, weight N / n."""
    N = len(population.r)
    idx = np.sort(rng.choice(N, size=n, replace=False))
    return SurveyFrame.from_dataset(population.subset(idx), weight=np.full(n, N / n), ids=idx + 1, keep_latents=True)


def naive_interval(frame, alpha, B, rng):
    """Respondents-only Gini and its normal-approximation interval."""
    keep = frame.r == 1
    g = weighted_gini(frame.y[keep], frame.weight[keep])
    v = bootstrap_variance(frame.y[keep], frame.weight[keep], B, rng)
    half = ndtri(1.0 - alpha / 2.0) * np.sqrt(v)
    return g, g - half, g + half


def run_replicate(settings, k, seed):
    pop_seed, sample_seed, impute_seed, naive_seed = replicate_seeds(seed, 4)
    population = simulate(settings.model, settings.population_size, pop_seed)
    truth = weighted_gini(population.latent["y"])
    frame = draw_sample(population, settings.n, make_rng(sample_seed))
    full = weighted_gini(frame.latent["y"], frame.weight)
    row = {"rep": k, "seed": seed, "true_gini": truth, "full_response_gini": full, "n_missing": int((frame.r == 0).sum())}
    report = multiple_impute(
        frame, settings.impute_model, settings.T, settings.alpha, impute_seed, settings.B, settings.estimator
    )
    lo, hi = report.interval
    row.update(lower=lo, upper=hi, covered=int(lo <= truth <= hi), covered_full=int(lo <= full <= hi))
    if settings.naive:
        g, nlo, nhi = naive_interval(frame, settings.alpha, settings.B, make_rng(naive_seed))
        row.update(
            naive_gini=g, naive_lower=nlo, naive_upper=nhi, naive_covered=int(nlo <= truth <= nhi),
            mi_covers_naive=int(lo <= g <= hi),
        )
    return row


def _safe_replicate(settings, k, seed):
    try:
        row = run_replicate(settings, k, seed)
        row["error"] = ""
    except NmarselError as exc:
        row = {"rep": k, "seed": seed, "error": f"{type(exc).__name__}: {exc}"}
    return row


def run_experiment(settings, threads=1):
    """Run every replicate; failures are recorded in the row, not raised.

    Each replicate owns a derived seed, so the rows do not depend on
    ``threads``.
    """
    seeds = replicate_seeds(settings.seed, settings.reps)
    if threads <= 1:
        return [_safe_replicate(settings, k, s) for k, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ks: _safe_replicate(settings, *ks), enumerate(seeds)))


def summarize(rows):
    ok = [r for r in rows if not r.get("error")]
    out = {"reps": len(rows), "failed": len(rows) - len(ok)}
    if ok:
        out["coverage"] = float(np.mean([r["covered"] for r in ok]))
        out["coverage_full_response"] = float(np.mean([r["covered_full"] for r in ok]))
        if "naive_covered" in ok[0]:
            out["naive_coverage"] = float(np.mean([r["naive_covered"] for r in ok]))
            out["mi_covers_naive_gini"] = float(np.mean([r["mi_covers_naive"] for r in ok]))
    return out
