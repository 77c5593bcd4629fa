"""Command-line surface: simulate, personalize, predict, eval.

Every command echoes its fully resolved configuration (defaults filled) to
stderr before running and embeds it in the JSON run report, so a report
can be reproduced from its own contents.  Exit codes: 0 success, 1
runtime/backend failure, 2 configuration or usage error.
"""

import argparse
import csv
import json
import os
import shlex
import sys
import time

import numpy as np

from . import __version__
from .adaptation import (
    FitConfig,
    fit_personalized,
    fit_personalized_pool,
    fit_personalized_small_domain,
)
from .blackbox import (
    BernoulliNoise,
    ExpressionModel,
    ExternalOracle,
    ExternalProcessModel,
    GaussianNoise,
    SyntheticOracle,
    TableModel,
    model_from_spec,
)
from .core import ConfigError, DataError, Domain, DomainError, load_csv
from .estimator import PersonalizedEstimator
from .simulation import (
    run_experiment,
    scenario_adversarial,
    scenario_classification,
    scenario_regression,
)

SCENARIOS = {
    "regression": scenario_regression,
    "classification": scenario_classification,
    "adversarial": scenario_adversarial,
}

_SIMULATE_DEFAULTS = {
    "scenario": None,
    "n": 300,
    "n_ptr": 1000,
    "repetitions": 100,
    "n_test": 500,
    "methods": ["single-task", "fsp", "pretrained"],
    "seed": 0,
    "out_dir": ".",
    "prefix": None,
    "pilot_fraction": 0.25,
    "c1": 2.0,
    "split": "reuse",
    "bandwidth": "cv",
    "full_bandwidth_set": False,
}

_PERSONALIZE_DEFAULTS = {
    "domain": None,
    "n": None,
    "pilot_size": None,
    "pilot_fraction": 0.25,
    "source": None,
    "model": None,
    "small_domain": False,
    "seed": 0,
    "c1": 2.0,
    "split": "reuse",
    "bandwidth": "cv",
    "full_bandwidth_set": False,
    "h_sigma": None,
    "synthetic_cap": 50_000,
    "out_estimator": "estimator.json",
    "out_report": "personalize_report.json",
}

_PREDICT_DEFAULTS = {"estimator": None, "queries": None, "out": "predictions.csv", "seed": 0}

_EVAL_DEFAULTS = {"predictions": None, "truth": None, "metric": "mse", "seed": 0}


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _resolve(defaults, file_config, overrides):
    """Merge file config and flag overrides onto defaults; reject unknown keys."""
    unknown = set(file_config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    resolved = dict(defaults)
    resolved.update(file_config)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    env_seed = os.environ.get("FSP_SEED")
    if overrides.get("seed") is None and env_seed is not None:
        try:
            resolved["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"FSP_SEED must be an integer, got {env_seed!r}") from None
    return resolved


def _echo(resolved):
    print("resolved-config: " + json.dumps(resolved, sort_keys=True), file=sys.stderr)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fit_config(resolved):
    bandwidth = resolved["bandwidth"]
    if isinstance(bandwidth, str) and bandwidth not in ("cv", "rule"):
        try:
            bandwidth = float(bandwidth)
        except ValueError:
            raise ConfigError("bandwidth must be 'cv', 'rule', or a number") from None
    return FitConfig(
        c1=float(resolved["c1"]),
        pilot_fraction=float(resolved["pilot_fraction"]),
        split=resolved["split"],
        bandwidth=bandwidth,
        full_bandwidth_set=bool(resolved["full_bandwidth_set"]),
        h_sigma=resolved.get("h_sigma"),
        synthetic_cap=int(resolved.get("synthetic_cap", 50_000)),
    ).validate()


def cmd_simulate(args):
    resolved = _resolve(_SIMULATE_DEFAULTS, _load_config_file(args.config), {
        "scenario": args.scenario,
        "n": args.n,
        "n_ptr": args.n_ptr,
        "repetitions": args.repetitions,
        "n_test": args.n_test,
        "methods": args.methods.split(",") if args.methods else None,
        "seed": args.seed,
        "out_dir": args.out_dir,
        "prefix": args.prefix,
        "split": args.split,
        "bandwidth": args.bandwidth,
    })
    if resolved["scenario"] not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {resolved['scenario']!r}; valid names: "
            + ", ".join(sorted(SCENARIOS))
        )
    _echo(resolved)
    started = time.time()
    scenario = SCENARIOS[resolved["scenario"]](n_test=int(resolved["n_test"]))
    result = run_experiment(
        scenario,
        methods=tuple(resolved["methods"]),
        n=int(resolved["n"]),
        n_ptr=int(resolved["n_ptr"]),
        repetitions=int(resolved["repetitions"]),
        seed=int(resolved["seed"]),
        config=_fit_config(resolved),
    )
    prefix = resolved["prefix"] or resolved["scenario"]
    out_dir = resolved["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    runs_path = os.path.join(out_dir, f"{prefix}_runs.csv")
    summary_path = os.path.join(out_dir, f"{prefix}_summary.csv")
    report_path = os.path.join(out_dir, f"{prefix}_report.json")
    _write_csv(
        runs_path,
        ["scenario", "method", "rep", "metric", "value", "theta1", "theta2", "bandwidth"],
        [
            [result.scenario, r.method, r.rep, result.metric, r.value, r.theta1, r.theta2, r.bandwidth]
            for r in result.rows
        ],
    )
    summary = result.summary()
    _write_csv(
        summary_path,
        ["method", "metric", "mean", "sd", "median", "q25", "q75", "reps"],
        [
            [m, result.metric, s["mean"], s["sd"], s["median"], s["q25"], s["q75"], s["reps"]]
            for m, s in summary.items()
        ],
    )
    _write_json(report_path, {
        "artifact_version": __version__,
        "command": "simulate",
        "resolved_config": resolved,
        "summary": summary,
        "outputs": [runs_path, summary_path],
        "wall_clock_sec": time.time() - started,
    })
    return 0


def _parse_domain(spec):
    if spec is None:
        return None
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError:
            raise ConfigError("domain must be JSON like [[lo1, lo2], [hi1, hi2]]") from None
    try:
        lo, hi = spec
        return Domain(lo, hi)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain: {exc}") from None


def _build_model(spec, dim):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("model must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "expression":
        return ExpressionModel(spec["expr"], dim)
    if kind == "table":
        if "csv" in spec:
            ss = load_csv(spec["csv"], spec["covariates"], response=spec["value"])
            return TableModel(ss.x, ss.y)
        return TableModel(spec["points"], spec["values"])
    if kind == "external":
        cmd = spec["cmd"]
        if isinstance(cmd, str):
            cmd = shlex.split(cmd)
        model = ExternalProcessModel(cmd, dim)
        model.start()  # handshake now so failures surface as backend errors
        return model
    raise ConfigError(f"unknown model kind {kind!r}")


def _build_noise(spec, dim):
    if spec is None:
        return GaussianNoise(1.0)
    kind = spec.get("kind", "gaussian")
    if kind == "gaussian":
        return GaussianNoise(spec.get("sigma", 1.0), dim=dim)
    if kind == "bernoulli":
        return BernoulliNoise()
    raise ConfigError(f"unknown noise kind {kind!r}")


def cmd_personalize(args):
    file_config = _load_config_file(args.config)
    overrides = {
        "n": args.n,
        "pilot_size": args.pilot_size,
        "seed": args.seed,
        "domain": args.domain,
        "split": args.split,
        "bandwidth": args.bandwidth,
        "out_estimator": args.out_estimator,
        "out_report": args.out_report,
        "small_domain": args.small_domain or None,
    }
    if args.pool_csv:
        overrides["source"] = {
            "kind": "pool",
            "csv": args.pool_csv,
            "covariates": args.covariates.split(",") if args.covariates else None,
            "response": args.response,
        }
    if args.model_expr:
        overrides["model"] = {"kind": "expression", "expr": args.model_expr}
    if args.model_cmd:
        overrides["model"] = {"kind": "external", "cmd": args.model_cmd}
    resolved = _resolve(_PERSONALIZE_DEFAULTS, file_config, overrides)
    if resolved["n"] is None:
        raise ConfigError("a labeling budget n is required")
    if resolved["source"] is None or resolved["model"] is None:
        raise ConfigError("both a label source and a model backend are required")
    _echo(resolved)
    started = time.time()
    n = int(resolved["n"])
    seed = int(resolved["seed"])
    source = resolved["source"]
    domain = _parse_domain(resolved["domain"])
    config = _fit_config(resolved)
    covariate_names = None

    kind = source.get("kind")
    if kind == "pool":
        covariate_names = source.get("covariates")
        if not covariate_names:
            raise ConfigError("pool sources need the covariate column names")
        ss = load_csv(source["csv"], covariate_names, response=source.get("response", "y"))
        pool_x, pool_y = ss.x, ss.y
        if n > len(pool_x):
            raise ConfigError(f"budget exceeds pool: n={n} > {len(pool_x)} pool points")
        if domain is None:
            pad = 1e-9 * np.maximum(1.0, np.abs(pool_x).max(axis=0))
            domain = Domain(pool_x.min(axis=0) - pad, pool_x.max(axis=0) + pad)
        model = _build_model(resolved["model"], domain.dim)
        pilot = resolved["pilot_size"]
        pilot = int(pilot) if pilot is not None else max(4, int(round(config.pilot_fraction * n)))
        fit = fit_personalized_pool(
            model, domain, n, pilot, pool_x, pool_y, config=config, seed=seed
        )
    elif kind in ("synthetic", "external"):
        if domain is None:
            raise ConfigError(f"{kind} sources require an explicit domain")
        model = _build_model(resolved["model"], domain.dim)
        if kind == "synthetic":
            truth = ExpressionModel(source["f_star"], domain.dim)
            noise = _build_noise(source.get("noise"), domain.dim)
            oracle = SyntheticOracle(truth.predict_batch, noise, domain)
        else:
            cmd = source["cmd"]
            if isinstance(cmd, str):
                cmd = shlex.split(cmd)
            label_model = ExternalProcessModel(cmd, domain.dim)
            label_model.start()
            oracle = ExternalOracle(label_model)
        fitter = fit_personalized_small_domain if resolved["small_domain"] else fit_personalized
        fit = fitter(model, domain, n, oracle, config=config, seed=seed)
    else:
        raise ConfigError(f"unknown source kind {kind!r}")

    if covariate_names is None:
        covariate_names = [f"x{j + 1}" for j in range(domain.dim)]
    warnings = []
    model_spec = fit.estimator.model.spec()
    if model_spec["kind"] == "external":
        warnings.append(
            "model backend is an external process; reproducing predictions "
            "depends on that program behaving identically"
        )
    _write_json(resolved["out_estimator"], {
        "format": "fsp-estimator",
        "version": 1,
        "artifact_version": __version__,
        "domain": domain.to_dict(),
        "covariates": covariate_names,
        "theta": {"theta1": fit.theta.theta1, "theta2": fit.theta.theta2},
        "bandwidth": fit.bandwidth,
        "train_x": fit.estimator.train_x.tolist(),
        "train_y": fit.estimator.train_y.tolist(),
        "model": model_spec,
        "warnings": warnings,
    })
    _write_json(resolved["out_report"], {
        "artifact_version": __version__,
        "command": "personalize",
        "resolved_config": resolved,
        "fit": fit.to_dict(),
        "outputs": [resolved["out_estimator"]],
        "warnings": warnings,
        "wall_clock_sec": time.time() - started,
    })
    return 0


def load_estimator(path):
    """Rebuild a PersonalizedEstimator (and covariate names) from its JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read estimator file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"estimator file is not valid JSON: {exc}") from None
    if payload.get("format") != "fsp-estimator":
        raise ConfigError("not an estimator file (missing format marker)")
    domain = Domain(payload["domain"]["lo"], payload["domain"]["hi"])
    model = model_from_spec(payload["model"])
    if payload["model"]["kind"] == "external":
        model.start()
    est = PersonalizedEstimator(
        np.asarray(payload["train_x"], float),
        np.asarray(payload["train_y"], float),
        model,
        (payload["theta"]["theta1"], payload["theta"]["theta2"]),
        payload["bandwidth"],
        domain,
    )
    return est, payload.get("covariates") or [f"x{j+1}" for j in range(domain.dim)]


def cmd_predict(args):
    resolved = _resolve(_PREDICT_DEFAULTS, _load_config_file(args.config), {
        "estimator": args.estimator,
        "queries": args.queries,
        "out": args.out,
        "seed": args.seed,
    })
    if not resolved["estimator"] or not resolved["queries"]:
        raise ConfigError("predict needs --estimator and --queries")
    _echo(resolved)
    est, covariates = load_estimator(resolved["estimator"])
    xs = load_csv(resolved["queries"], covariates, allow_empty=True)
    ok = est.domain.contains(xs) if len(xs) else np.ones(0, bool)
    if len(xs) and not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise DomainError(
            f"query row {bad + 1} of {resolved['queries']} lies outside the "
            f"estimator's domain: {xs[bad].tolist()}"
        )
    preds = est.predict_batch(xs) if len(xs) else np.empty(0)
    _write_csv(resolved["out"], ["prediction"], [[float(p)] for p in preds])
    return 0


def _read_column(path, preferred):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"empty data: {path} has no header row")
        header = [c.strip() for c in header]
        rows = [row for row in reader if row]
    if len(header) == 1:
        col = 0
    else:
        matches = [name for name in preferred if name in header]
        if not matches:
            raise ConfigError(
                f"{path} has columns {header}; expected one of {list(preferred)} "
                "or a single-column file"
            )
        col = header.index(matches[0])
    out = []
    for r, row in enumerate(rows, start=1):
        try:
            out.append(float(row[col].strip()))
        except (ValueError, IndexError):
            raise DataError(
                f"non-numeric value at row {r}, column {header[col]!r} of {path}"
            ) from None
    return np.asarray(out)


def cmd_eval(args):
    resolved = _resolve(_EVAL_DEFAULTS, _load_config_file(args.config), {
        "predictions": args.predictions,
        "truth": args.truth,
        "metric": args.metric,
        "seed": args.seed,
    })
    if not resolved["predictions"] or not resolved["truth"]:
        raise ConfigError("eval needs --predictions and --truth")
    if resolved["metric"] not in ("mse", "mce"):
        raise ConfigError(f"unknown metric {resolved['metric']!r}; valid: mse, mce")
    _echo(resolved)
    preds = _read_column(resolved["predictions"], ("prediction", "pred", "y"))
    truth = _read_column(resolved["truth"], ("y", "truth", "label"))
    if len(preds) != len(truth):
        raise ConfigError(
            f"length mismatch: {len(preds)} predictions vs {len(truth)} truth rows"
        )
    if len(preds) == 0:
        raise ConfigError("cannot evaluate empty files")
    if resolved["metric"] == "mse":
        value = float(np.mean((truth - preds) ** 2))
    else:
        if not np.isin(truth, (0.0, 1.0)).all():
            raise ConfigError("mce needs binary 0/1 truth labels")
        value = float(np.mean(np.abs(truth - (preds >= 0.5).astype(float))))
    print(f"{value:.6g}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fsp",
        description="Personalize a black-box predictor under a labeling budget.",
    )
    parser.add_argument("--version", action="version", version=f"fsp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a shipped scenario and write CSV results")
    sim.add_argument("--config")
    sim.add_argument("--scenario")
    sim.add_argument("-n", type=int, dest="n")
    sim.add_argument("--n-ptr", type=int, dest="n_ptr")
    sim.add_argument("--repetitions", "--reps", type=int, dest="repetitions")
    sim.add_argument("--n-test", type=int, dest="n_test")
    sim.add_argument("--methods")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out-dir", dest="out_dir")
    sim.add_argument("--prefix")
    sim.add_argument("--split", choices=["reuse", "strict"])
    sim.add_argument("--bandwidth")
    sim.set_defaults(func=cmd_simulate)

    per = sub.add_parser("personalize", help="fit a personalized estimator")
    per.add_argument("--config")
    per.add_argument("-n", "--budget", type=int, dest="n")
    per.add_argument("--pilot-size", type=int, dest="pilot_size")
    per.add_argument("--pool-csv", dest="pool_csv")
    per.add_argument("--covariates")
    per.add_argument("--response")
    per.add_argument("--model-expr", dest="model_expr")
    per.add_argument("--model-cmd", dest="model_cmd")
    per.add_argument("--domain")
    per.add_argument("--split", choices=["reuse", "strict"])
    per.add_argument("--bandwidth")
    per.add_argument("--small-domain", action="store_true", dest="small_domain")
    per.add_argument("--seed", type=int)
    per.add_argument("--out-estimator", dest="out_estimator")
    per.add_argument("--out-report", dest="out_report")
    per.set_defaults(func=cmd_personalize)

    pre = sub.add_parser("predict", help="evaluate a saved estimator on query points")
    pre.add_argument("--config")
    pre.add_argument("--estimator")
    pre.add_argument("--queries")
    pre.add_argument("--out")
    pre.add_argument("--seed", type=int)
    pre.set_defaults(func=cmd_predict)

    ev = sub.add_parser("eval", help="score prediction and truth files")
    ev.add_argument("--config")
    ev.add_argument("--predictions")
    ev.add_argument("--truth")
    ev.add_argument("--metric", choices=["mse", "mce"])
    ev.add_argument("--seed", type=int)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime and backend failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
