"""Command-line driver: ``nmarsel simulate | estimate | impute | experiment``.

Every run reads one JSON document (``--config``), fills in defaults, applies
flag overrides and writes the resolved document to ``<command>.config.json``
in the output directory. Feeding that sidecar back through ``--config``
reproduces every output byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import parse_model, simulate
from .exceptions import ConfigError, DataError, NmarselError, NumericalError
from .frame import SurveyFrame

COMMANDS = ("simulate", "estimate", "impute", "experiment")
ESTIMATORS = ("mean_by_integral", "mean_at_boundary", "series", "fourier", "nonrespondent_cdf")


def plain(obj):
    """Recursively convert numpy containers and scalars to JSON types."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dump_json(obj, path):
    text = json.dumps(plain(obj), indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def load_config(path):
    if path is None:
        return {}, Path.cwd()
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}, line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc, path.resolve().parent


def _int(doc, key, default, path=None):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{path or key}: expected an integer, got {value!r}")
    return int(value)


def _float(doc, key, default):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def _seed(doc, flag):
    seed = flag if flag is not None else _int(doc, "seed", 0)
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {seed}")
    return seed


def _data_path(doc, base):
    if "data" not in doc:
        raise ConfigError("data: required field is missing")
    path = Path(doc["data"])
    if not path.is_absolute():
        path = base / path
    if not path.is_file():
        raise ConfigError(f"data: file {path} does not exist")
    return str(path.resolve())


def _phi(value):
    if isinstance(value, dict):
        if set(value) != {"indicator"}:
            raise ConfigError(f"phi: expected {{'indicator': t}}, got {value!r}")
        return ("indicator", float(value["indicator"]))
    if value not in ("one", "identity"):
        raise ConfigError(f"phi: expected 'one', 'identity' or {{'indicator': t}}, got {value!r}")
    return value


def _estimator_config(d):
    from .estimators._base import EstimatorConfig

    if not isinstance(d, dict):
        raise ConfigError("options: expected an object")
    try:
        return EstimatorConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"options: {exc}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def resolve_simulate(doc, base, seed):
    if "model" not in doc:
        raise ConfigError("model: required field is missing")
    parse_model(doc["model"], "model")
    n = _int(doc, "n", 1000)
    if n < 1:
        raise ConfigError("n: must be >= 1")
    return {
        "command": "simulate",
        "model": doc["model"],
        "n": n,
        "seed": seed,
        "keep_latents": bool(doc.get("keep_latents", False)),
    }


def run_simulate(cfg, out):
    data = simulate(parse_model(cfg["model"], "model"), cfg["n"], cfg["seed"])
    frame = SurveyFrame.from_dataset(data, keep_latents=cfg["keep_latents"])
    frame.to_csv(out / "data.csv")
    return ["data.csv"]


def resolve_estimate(doc, base, seed):
    name = doc.get("estimator")
    if name not in ESTIMATORS:
        raise ConfigError(f"estimator: expected one of {ESTIMATORS}, got {name!r}")
    default_phi = "one" if name in ("series", "fourier") else "identity"
    cfg = {
        "command": "estimate",
        "data": _data_path(doc, base),
        "estimator": name,
        "phi": doc.get("phi", default_phi),
        "options": doc.get("options", {}),
        "seed": seed,
    }
    if name != "nonrespondent_cdf":
        _phi(cfg["phi"])
    _estimator_config(cfg["options"])
    if name == "mean_at_boundary" or name == "nonrespondent_cdf":
        cfg["s_tilde"] = doc.get("s_tilde")
    if name == "nonrespondent_cdf":
        cfg["method"] = doc.get("method", "threshold")
        cfg["t_grid"] = doc.get("t_grid")
    if name == "series":
        cfg["T"] = _int(doc, "T", 7)
        cfg["gamma_resolution"] = _int(doc, "gamma_resolution", 32)
        cfg["mean_estimate"] = doc.get("mean_estimate")
        if cfg["mean_estimate"] is not None:
            cfg["mean_estimate"] = _float(doc, "mean_estimate", None)
        if cfg["T"] < 0:
            raise ConfigError("T: must be >= 0")
    if name == "fourier":
        cfg["cutoff"] = _float(doc, "cutoff", 8.0)
        cfg["taper"] = _float(doc, "taper", 0.5)
        cfg["grids"] = doc.get("grids", {})
    return cfg


def run_estimate(cfg, out):
    from . import estimators as est
    from .spherical import build_grid

    frame = SurveyFrame.read_csv(cfg["data"])
    options = _estimator_config(cfg["options"])
    name = cfg["estimator"]
    report = {"config": cfg}
    files = ["estimate.json"]
    if name in ("mean_by_integral", "mean_at_boundary"):
        if name == "mean_by_integral":
            res = est.mean_by_integral(frame, _phi(cfg["phi"]), options)
        else:
            res = est.mean_at_boundary(frame, _phi(cfg["phi"]), cfg["s_tilde"], options)
        report.update(estimate=res.value, flags=res.flags, details=res.details)
        if "p_grid" in res.details:
            det = res.details
            write_rows(out / "curve.csv", ["p", "m", "liv"], zip(det["p_grid"], det["m"], det["liv"]))
            files.append("curve.csv")
    elif name == "nonrespondent_cdf":
        cdf = est.nonrespondent_cdf(frame, cfg["t_grid"], cfg["method"], options, s_tilde=cfg["s_tilde"])
        write_rows(out / "cdf.csv", ["t", "cdf", "raw"], zip(cdf.t_grid, cdf.values, cdf.raw))
        report.update(method=cdf.method, flags=cdf.flags)
        files.append("cdf.csv")
    elif name == "series":
        d = frame.z.shape[1] + 1
        mean = cfg["mean_estimate"]
        if mean is None:
            # the boundary limit supplies E[phi(Y)] when no value is given
            mean = est.mean_at_boundary(frame, _phi(cfg["phi"]), None, options).value
        res = est.series_coefficients(
            frame, _phi(cfg["phi"]), build_grid(d, cfg["gamma_resolution"]), cfg["T"], mean, options
        )
        nodes = res.gamma_grid.nodes
        header = [f"gamma_{k + 1}" for k in range(d)] + ["weight"] + [f"c_{2 * p + 1}" for p in range(cfg["T"] + 1)]
        coef = np.asarray(res.coefficients).reshape(cfg["T"] + 1, -1)
        write_rows(
            out / "coefficients.csv",
            header,
            (list(nodes[i]) + [res.gamma_grid.weights[i]] + list(coef[:, i]) for i in range(nodes.shape[0])),
        )
        res.root.to_csv(out / "root.csv")
        res.reconstructed.to_csv(out / "reconstructed.csv")
        report.update(
            T=cfg["T"],
            mode=res.mode(),
            integral=res.reconstructed.integral(),
            diagnostics=res.diagnostics,
        )
        files += ["coefficients.csv", "root.csv", "reconstructed.csv"]
    else:
        grids = est.FourierGrids.from_dict(cfg["grids"])
        res = est.fourier_root(frame, _phi(cfg["phi"]), grids, cfg["cutoff"], options, cfg["taper"])
        tt, gg = np.meshgrid(res.theta, res.gbar, indexing="ij")
        write_rows(out / "density.csv", ["theta", "gbar", "value"], zip(tt.ravel(), gg.ravel(), res.values.ravel()))
        write_rows(out / "slice_s0.csv", ["zbar", "value"], zip(res.zbar, res.slice_s0))
        report.update(integral=res.integral(), diagnostics=res.diagnostics)
        files += ["density.csv", "slice_s0.csv"]
    dump_json(report, out / "estimate.json")
    return files


def resolve_impute(doc, base, seed):
    from .survey import IMPUTATION_METHODS

    cfg = {
        "command": "impute",
        "data": _data_path(doc, base),
        "model": doc.get("model", "threshold"),
        "T": _int(doc, "T", 20),
        "alpha": _float(doc, "alpha", 0.1),
        "B": _int(doc, "B", 100),
        "variance_method": doc.get("variance_method", "bootstrap"),
        "options": doc.get("options", {}),
        "s_tilde": doc.get("s_tilde"),
        "t_grid": doc.get("t_grid"),
        "seed": seed,
    }
    if cfg["model"] not in IMPUTATION_METHODS:
        raise ConfigError(f"model: expected one of {sorted(IMPUTATION_METHODS)}, got {cfg['model']!r}")
    if cfg["T"] < 1:
        raise ConfigError("T: must be >= 1")
    if not 0.0 <= cfg["alpha"] < 1.0:
        raise ConfigError("alpha: must lie in [0, 1)")
    _estimator_config(cfg["options"])
    return cfg


def run_impute(cfg, out):
    from .survey import multiple_impute

    frame = SurveyFrame.read_csv(cfg["data"])
    report = multiple_impute(
        frame,
        cfg["model"],
        cfg["T"],
        cfg["alpha"],
        cfg["seed"],
        cfg["B"],
        _estimator_config(cfg["options"]),
        cfg["variance_method"],
        cfg["s_tilde"],
        cfg["t_grid"],
    )
    body = report.to_dict()
    body["config"] = cfg
    dump_json(body, out / "report.json")
    (out / "summary.csv").write_text(report.csv_summary())
    return ["report.json", "summary.csv"]


EXPERIMENT_COLUMNS = (
    "rep", "seed", "true_gini", "full_response_gini", "n_missing", "lower", "upper", "covered",
    "covered_full", "naive_gini", "naive_lower", "naive_upper", "naive_covered", "mi_covers_naive", "error",
)


def resolve_experiment(doc, base, seed):
    from .experiment import ExperimentSettings

    doc = dict(doc)
    doc.pop("command", None)
    doc["seed"] = seed
    settings = ExperimentSettings.from_dict(doc)
    impute = dict(doc.get("impute", {}))
    return {
        "command": "experiment",
        "model": doc.get("model"),
        "n": settings.n,
        "population_size": settings.population_size,
        "reps": settings.reps,
        "seed": seed,
        "naive": settings.naive,
        "impute": {
            "model": settings.impute_model,
            "T": settings.T,
            "alpha": settings.alpha,
            "B": settings.B,
            "estimator": impute.get("estimator", {}),
        },
    }


def run_experiment_cmd(cfg, out, threads):
    from .experiment import ExperimentSettings, run_experiment, summarize

    settings = ExperimentSettings.from_dict(cfg)
    rows = run_experiment(settings, threads)
    write_rows(out / "replicates.csv", EXPERIMENT_COLUMNS, ([row.get(c) for c in EXPERIMENT_COLUMNS] for row in rows))
    summary = summarize(rows)
    summary["level"] = 1.0 - settings.alpha
    summary["config"] = cfg
    dump_json(summary, out / "summary.json")
    return ["replicates.csv", "summary.json"]


RESOLVERS = {
    "simulate": resolve_simulate,
    "estimate": resolve_estimate,
    "impute": resolve_impute,
    "experiment": resolve_experiment,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="nmarsel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory (created if needed)")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--threads", type=int, default=1, help="worker threads (experiment only)")
        if name == "simulate":
            p.add_argument("--keep-latents", action="store_true", help="also write latent columns")
    return parser


def run(args):
    doc, base = load_config(args.config)
    command = doc.pop("command", args.command)
    if command != args.command:
        raise ConfigError(f"command: config was written for {command!r}, not {args.command!r}")
    if getattr(args, "keep_latents", False):
        doc["keep_latents"] = True
    if args.threads < 1:
        raise ConfigError("--threads: must be >= 1")
    cfg = RESOLVERS[args.command](doc, base, _seed(doc, args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        files = run_simulate(cfg, out)
    elif args.command == "estimate":
        files = run_estimate(cfg, out)
    elif args.command == "impute":
        files = run_impute(cfg, out)
    else:
        files = run_experiment_cmd(cfg, out, args.threads)
    dump_json(cfg, out / f"{args.command}.config.json")
    return files


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            files = run(args)
    except NmarselError as exc:
        print(f"nmarsel {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"nmarsel {args.command}: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except OSError as exc:
        print(f"nmarsel {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    for f in files:
        print(os.path.join(args.out, f))
    return 0


if __name__ == "__main__":
    sys.exit(main())
