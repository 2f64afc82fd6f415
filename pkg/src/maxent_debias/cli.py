"""``maxent-debias`` command line: encode, train, sample, evaluate, pipeline.

Exit codes: 0 success, 1 configuration or usage error, 2 data error
(bad input files, schema problems, unusable marginals), 3 numerical failure
(solver did not converge or broke down).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import io as mio
from .domain import Dataset, DomainSchema
from .errors import (
    DomainTooLarge,
    HypothesisViolated,
    MaxEntError,
    NonFiniteInput,
    NotConverged,
    NumericalBreakdown,
    QPNotConverged,
    SchemaError,
    SchemaMismatch,
    UnboundedRadius,
)
from .metrics import (
    covariance_difference_norm,
    fairness_bound,
    fairness_report,
    kl_divergence_smoothed,
)
from .prior import empirical_weights, mix_prior, reweight
from .sampler import BATCH_SIZE, sample_values
from .solver import MarginalKind, MaxEntModel, SolverConfig, SolverMode, bounding_radius, solve, target_marginal

log = logging.getLogger("maxent_debias")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (NotConverged, NumericalBreakdown, NonFiniteInput, UnboundedRadius, QPNotConverged)

MODEL_FILE = "model.json"
TRAIN_REPORT_FILE = "train_report.json"
ENCODED_FILE = "encoded.csv"
ENCODE_SUMMARY_FILE = "encode_summary.json"
SAMPLES_FILE = "samples.csv"
SAMPLES_META_FILE = "samples.meta.json"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"


class ConfigError(MaxEntError, ValueError):
    pass


class UsageError(ConfigError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    schema_path: Path | None = None
    data_path: Path | None = None
    tau: float = 1.0
    C: float = 0.5
    prior: str = "reweighted"
    marginal_kind: MarginalKind = MarginalKind.BALANCED
    epsilon: float = 1e-8
    gradient_tolerance: float = 1e-9
    solver_mode: SolverMode = SolverMode.DAMPED_NEWTON
    max_iterations: int | None = None
    sample_count: int = 10000
    seed: int = 0
    output_dir: Path = Path("out")
    label_value: int = 1
    eta_min: float = 1e-6
    clamp_marginal: bool = False
    skip_bad_rows: bool = False
    kl_floor: float = 1e-7

    def __post_init__(self):
        try:
            for name in ("tau", "C", "epsilon", "gradient_tolerance", "eta_min", "kl_floor"):
                object.__setattr__(self, name, float(getattr(self, name)))
            for name in ("sample_count", "seed", "label_value"):
                v = getattr(self, name)
                if isinstance(v, bool) or int(v) != v:
                    raise ConfigError(f"{name} must be an integer, got {v!r}")
                object.__setattr__(self, name, int(v))
            object.__setattr__(self, "marginal_kind", MarginalKind(self.marginal_kind))
            object.__setattr__(self, "solver_mode", SolverMode(self.solver_mode))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration value: {exc}") from exc
        for name in ("schema_path", "data_path", "output_dir"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, Path(v))
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0.0 < self.C <= 1.0:
            raise ConfigError(f"C must lie in (0, 1], got {self.C}")
        if self.prior not in ("reweighted", "empirical"):
            raise ConfigError(f"prior must be 'reweighted' or 'empirical', got {self.prior!r}")
        if self.sample_count < 1:
            raise ConfigError(f"sample_count must be at least 1, got {self.sample_count}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not (self.epsilon > 0 and self.gradient_tolerance > 0 and self.kl_floor > 0):
            raise ConfigError("epsilon, gradient_tolerance and kl_floor must be positive")
        if not 0.0 < self.eta_min < 0.5:
            raise ConfigError("eta_min must lie in (0, 1/2)")
        if self.max_iterations is not None and int(self.max_iterations) < 1:
            raise ConfigError("max_iterations must be at least 1")

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any], base_dir: Path | None = None) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {unknown}")
        values = dict(doc)
        if base_dir is not None:
            for name in ("schema_path", "data_path", "output_dir"):
                if values.get(name) is not None:
                    p = Path(values[name])
                    values[name] = p if p.is_absolute() else (base_dir / p).resolve()
        return cls(**values)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            epsilon=self.epsilon,
            mode=self.solver_mode,
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
        )

    def to_json_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, Path):
                v = str(v)
            elif hasattr(v, "value"):
                v = v.value
            out[k] = v
        return out


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            if sys.version_info >= (3, 11):
                import tomllib
            else:
                import tomli as tomllib
            doc = tomllib.loads(raw.decode("utf-8"))
        else:
            doc = json.loads(raw)
    except Exception as exc:  # parse errors from either format
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a table/object at top level")
    return PipelineConfig.from_mapping(doc, path.parent)


# building blocks -------------------------------------------------------------

def _require(value, what: str):
    if value is None:
        raise UsageError(f"{what} is required (pass it on the command line or in --config)")
    return value


def _load_dataset(schema: DomainSchema, path: Path, skip_bad_rows: bool) -> tuple[Dataset, list]:
    if mio.is_encoded_csv(path):
        return mio.read_encoded_csv(schema, path), []
    return mio.read_raw_csv(schema, path, skip_bad_rows)


def run_encode(cfg: PipelineConfig, out: Path) -> dict:
    schema = mio.load_schema(_require(cfg.schema_path, "schema"))
    ds, errors = mio.read_raw_csv(schema, _require(cfg.data_path, "input data"), cfg.skip_bad_rows)
    summary = mio.dataset_summary(ds)
    summary["skipped_rows"] = sorted({e.row for e in errors})
    mio.write_encoded_csv(ds, out / ENCODED_FILE)
    mio.write_json(out / ENCODE_SUMMARY_FILE, summary)
    return summary


def train_model(cfg: PipelineConfig, ds: Dataset) -> tuple[MaxEntModel, dict]:
    """Weights, prior, target marginal and dual solve; returns the model and a report."""
    start = time.perf_counter()
    w = reweight(ds, cfg.tau) if cfg.prior == "reweighted" else empirical_weights(ds)
    q = mix_prior(cfg.C, w)
    theta = target_marginal(ds, w, cfg.marginal_kind, cfg.eta_min, clamp=cfg.clamp_marginal)
    result = solve(q, theta, cfg.solver_config(), eta_min=cfg.eta_min)
    elapsed = time.perf_counter() - start
    eta = float(result.info["eta"])
    report = {
        "iterations": result.iterations,
        "converged": result.converged,
        "dual_value": result.model.dual_value,
        "gradient_norm_inf": result.final_gradient_norm,
        "lambda_norm_2": float(np.linalg.norm(result.model.lam)),
        "bounding_radius": bounding_radius(ds.schema.d, eta, cfg.C),
        "eta": eta,
        "solver_mode": cfg.solver_mode.value,
        "wall_clock_seconds": elapsed,
        "N": ds.N,
        "d": ds.schema.d,
        "domain_size": str(ds.schema.domain_size),
    }
    return result.model, report


def run_train(cfg: PipelineConfig, out: Path) -> dict:
    schema = mio.load_schema(_require(cfg.schema_path, "schema"))
    data_path = _require(cfg.data_path, "training data")
    ds, _ = _load_dataset(schema, data_path, cfg.skip_bad_rows)
    model, report = train_model(cfg, ds)
    meta = {
        "tau": cfg.tau,
        "C": cfg.C,
        "prior": cfg.prior,
        "marginal_kind": cfg.marginal_kind.value,
        "solver_mode": cfg.solver_mode.value,
        "epsilon": cfg.epsilon,
        "gradient_tolerance": cfg.gradient_tolerance,
        "training_data_sha256": mio.sha256_file(data_path),
        "N": ds.N,
    }
    mio.save_model(model, out / MODEL_FILE, meta)
    mio.write_json(out / TRAIN_REPORT_FILE, report)
    return report


def run_sample(model_path: Path, count: int, seed: int, out: Path) -> dict:
    if count < 1:
        raise UsageError(f"count must be at least 1, got {count}")
    model = mio.load_model(model_path)
    vals = sample_values(model, count, seed)
    mio.atomic_write_text(out / SAMPLES_FILE, mio.values_to_csv(model.schema, vals))
    meta = {
        "seed": seed,
        "count": count,
        "model_sha256": mio.sha256_file(model_path),
        "generator": "numpy Philox, one stream per batch keyed by (seed, batch index)",
        "batch_size": BATCH_SIZE,
        "block_order": list(range(model.schema.n_blocks)),
    }
    mio.write_json(out / SAMPLES_META_FILE, meta)
    return meta


def _distance(p, ref: Dataset, cfg: PipelineConfig, sample_for_cov=None) -> dict:
    """KL on small domains, covariance norm otherwise."""
    try:
        return {"kl_divergence": kl_divergence_smoothed(p, ref, cfg.kl_floor)}
    except DomainTooLarge:
        print("notice: domain too large for KL; reporting covariance difference norm", file=sys.stderr)
        ds = p if isinstance(p, Dataset) else sample_for_cov()
        return {"covariance_difference_norm": covariance_difference_norm(ds, ref)}


def _bound_dict(model: MaxEntModel, cfg: PipelineConfig) -> dict | None:
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", HypothesisViolated)
            b = fairness_bound(model, label_value=cfg.label_value, tau=cfg.tau)
    except SchemaError:
        return None
    return {
        "delta": b.delta,
        "tau_prime": b.tau_prime,
        "theta_protected": b.theta_protected,
        "hypothesis_holds": b.hypothesis_holds,
        "warnings": [str(w.message) for w in caught],
    }


def run_evaluate(
    cfg: PipelineConfig,
    out: Path,
    model_path: Path | None,
    samples_path: Path | None,
    reference_path: Path | None,
) -> dict:
    if (model_path is None) == (samples_path is None):
        raise UsageError("evaluate needs exactly one of --model or --samples")
    ref_path = _require(reference_path or cfg.data_path, "reference data")
    columns: dict[str, dict] = {}
    if model_path is not None:
        model = mio.load_model(model_path)
        schema = model.schema
        if cfg.schema_path is not None and mio.load_schema(cfg.schema_path) != schema:
            raise SchemaMismatch("model schema differs from the configured schema")
    else:
        schema = mio.load_schema(_require(cfg.schema_path, "schema"))
    ref, _ = _load_dataset(schema, ref_path, cfg.skip_bad_rows)
    columns["raw_data"] = {**fairness_report(ref, cfg.label_value).to_dict(), "kl_divergence": 0.0}
    if model_path is not None:
        prior = MaxEntModel.from_prior(model.prior, model.theta)

        def draw():
            vals = sample_values(model, cfg.sample_count, cfg.seed)
            return Dataset.from_values(schema, vals)

        def draw_prior():
            vals = sample_values(prior, cfg.sample_count, cfg.seed)
            return Dataset.from_values(schema, vals)

        columns["prior"] = {**fairness_report(prior, cfg.label_value).to_dict(), **_distance(prior, ref, cfg, draw_prior)}
        columns["max_entropy"] = {**fairness_report(model, cfg.label_value).to_dict(), **_distance(model, ref, cfg, draw)}
        bound = _bound_dict(model, cfg)
        if bound is not None:
            columns["max_entropy"]["fairness_bound"] = bound
    else:
        ds, _ = _load_dataset(schema, samples_path, cfg.skip_bad_rows)
        columns["samples"] = {**fairness_report(ds, cfg.label_value).to_dict(), **_distance(ds, ref, cfg)}
    if any("covariance_difference_norm" in c for c in columns.values()):
        del columns["raw_data"]["kl_divergence"]
        columns["raw_data"]["covariance_difference_norm"] = 0.0
    report = {"label_value": cfg.label_value, "columns": columns}
    mio.write_json(out / REPORT_FILE, report)
    return report


def format_table(report: Mapping[str, Any]) -> str:
    cols = list(report["columns"])
    rows = [("Data SR", "statistical_rate"), ("Data RR", "representation_rate")]
    if any("kl_divergence" in c for c in report["columns"].values()):
        rows.append(("KL-div w.r.t. raw data", "kl_divergence"))
    if any("covariance_difference_norm" in c for c in report["columns"].values()):
        rows.append(("Cov-norm w.r.t. raw data", "covariance_difference_norm"))
    head = ["metric"] + cols
    body = []
    for label, key in rows:
        cells = [label]
        for c in cols:
            v = report["columns"][c].get(key)
            cells.append("-" if v is None else f"{v:.4f}")
        body.append(cells)
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(s.ljust(w) if i == 0 else s.rjust(w) for i, (s, w) in enumerate(zip(r, widths))) for r in [head] + body]
    return "\n".join(lines)


def run_pipeline(cfg: PipelineConfig, out: Path) -> dict:
    artifacts: dict[str, Path] = {}
    summary = run_encode(cfg, out)
    artifacts["encoded"] = out / ENCODED_FILE
    artifacts["encode_summary"] = out / ENCODE_SUMMARY_FILE
    train_cfg = replace(cfg, data_path=out / ENCODED_FILE)
    report = run_train(train_cfg, out)
    artifacts["model"] = out / MODEL_FILE
    artifacts["train_report"] = out / TRAIN_REPORT_FILE
    run_sample(out / MODEL_FILE, cfg.sample_count, cfg.seed, out)
    artifacts["samples"] = out / SAMPLES_FILE
    artifacts["samples_meta"] = out / SAMPLES_META_FILE
    model_eval = run_evaluate(cfg, out / "evaluate_model", out / MODEL_FILE, None, out / ENCODED_FILE)
    sample_eval = run_evaluate(cfg, out / "evaluate_samples", None, out / SAMPLES_FILE, out / ENCODED_FILE)
    artifacts["model_report"] = out / "evaluate_model" / REPORT_FILE
    artifacts["samples_report"] = out / "evaluate_samples" / REPORT_FILE
    manifest = {
        "config": cfg.to_json_dict(),
        "seed": cfg.seed,
        "encode": summary,
        "train": report,
        "artifacts": {k: {"path": str(p.relative_to(out)), "sha256": mio.sha256_file(p)} for k, p in artifacts.items()},
    }
    mio.write_json(out / MANIFEST_FILE, manifest)
    return {"manifest": manifest, "model_report": model_eval, "samples_report": sample_eval}


# argument parsing --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config file (JSON or TOML)")
    common.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--schema", type=Path, help="schema JSON")
    common.add_argument("-v", "--verbose", action="store_true")

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--tau", type=float)
    train_opts.add_argument("--C", dest="C", type=float)
    train_opts.add_argument("--marginal", choices=[k.value for k in MarginalKind])
    train_opts.add_argument("--prior", choices=["reweighted", "empirical"])
    train_opts.add_argument("--mode", choices=[m.value for m in SolverMode])

    p = _Parser(prog="maxent-debias", description="Fair max-entropy distributions for tabular data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    enc = sub.add_parser("encode", parents=[common], help="encode a raw CSV against a schema")
    enc.add_argument("--input", type=Path, help="raw CSV with one column per block")
    enc.add_argument("--skip-bad-rows", action="store_true")

    tr = sub.add_parser("train", parents=[common, train_opts], help="fit a max-entropy model")
    tr.add_argument("--data", type=Path, help="raw or encoded training CSV")

    sm = sub.add_parser("sample", parents=[common], help="draw samples from a model")
    sm.add_argument("--model", type=Path)
    sm.add_argument("--count", type=int)

    ev = sub.add_parser("evaluate", parents=[common], help="fairness and distance metrics")
    ev.add_argument("--model", type=Path)
    ev.add_argument("--samples", type=Path)
    ev.add_argument("--reference", type=Path, help="raw or encoded reference CSV")
    ev.add_argument("--label-value", type=int)

    pl = sub.add_parser("pipeline", parents=[common, train_opts], help="encode, train, sample and evaluate")
    pl.add_argument("--input", type=Path)
    pl.add_argument("--count", type=int)
    pl.add_argument("--skip-bad-rows", action="store_true")
    return p


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    over: dict[str, Any] = {}
    pairs = {
        "seed": "seed", "out": "output_dir", "schema": "schema_path", "tau": "tau", "C": "C",
        "marginal": "marginal_kind", "prior": "prior", "mode": "solver_mode", "count": "sample_count",
        "label_value": "label_value", "input": "data_path", "data": "data_path",
    }
    for arg, key in pairs.items():
        v = getattr(args, arg, None)
        if v is not None:
            over[key] = v
    if getattr(args, "skip_bad_rows", False):
        over["skip_bad_rows"] = True
    if "sample_count" in over and over["sample_count"] < 1:
        raise UsageError(f"count must be at least 1, got {over['sample_count']}")
    return replace(cfg, **over) if over else cfg


def _dispatch(args) -> int:
    cfg = _config_from_args(args)
    out = cfg.output_dir
    if args.command == "encode":
        s = run_encode(cfg, out)
        print(f"encoded N={s['N']} distinct={s['distinct_points']} d={s['d']} -> {out / ENCODED_FILE}")
    elif args.command == "train":
        r = run_train(cfg, out)
        print(
            f"trained in {r['iterations']} iterations, h={r['dual_value']:.10g}, "
            f"|grad|={r['gradient_norm_inf']:.2e}, {r['wall_clock_seconds']:.2f}s -> {out / MODEL_FILE}"
        )
    elif args.command == "sample":
        model_path = args.model or out / MODEL_FILE
        m = run_sample(model_path, cfg.sample_count, cfg.seed, out)
        print(f"wrote {m['count']} samples (seed {m['seed']}) -> {out / SAMPLES_FILE}")
    elif args.command == "evaluate":
        r = run_evaluate(cfg, out, args.model, args.samples, args.reference)
        print(format_table(r))
    elif args.command == "pipeline":
        r = run_pipeline(cfg, out)
        print(format_table(r["model_report"]))
        print(f"manifest -> {out / MANIFEST_FILE}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MaxEntError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
