"""Command-line front end: ``simulate``, ``analyze``, ``verifactor`` and ``compare``.

A JSON config file (``--config``) may supply any option; flags given on the
command line take precedence. Outputs go to ``--out`` or, if unset, to the
directory named by ``REFACTOR_OUTPUT_DIR`` (default: current directory).

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .assoc import AssociationKind
from .core import ValidationError, parallel_map
from .io import DatasetSpec, ReportDocument, dataset_metadata, write_report, write_table
from .metrics import METRIC_KEYS
from .refactor import TRADITIONAL_METRICS, refactor_functional
from .sim import ALL_MODES, RESULT_COLUMNS, SIM_KINDS, SIM_MODES, parse_grid, replicate
from .verifactor import PREDICTOR_ALIASES, BcvConfig, Predictor, verifactor_functional

OUTPUT_ENV = "REFACTOR_OUTPUT_DIR"
SUBCOMMANDS = ("simulate", "analyze", "verifactor", "compare")
ALL_METRICS = METRIC_KEYS + tuple(sorted(TRADITIONAL_METRICS))
# metrics where smaller is better
LOWER_IS_BETTER = frozenset({"cross_entropy"})


class ConfigError(ValueError):
    """Invalid run configuration (exit code 2)."""


@dataclass
class RunConfig:
    subcommand: str
    data: Optional[str] = None
    format: str = "wide_csv"
    missing_token: str = "NA"
    id_columns: tuple = ("respondent", "item", "response")
    study: Optional[str] = None
    reps: int = 10
    gamma_grid: Optional[str] = None
    n: Optional[int] = None
    p: Optional[int] = None
    assoc: tuple = ()
    metrics: tuple = ()
    modes: tuple = ()
    predictor: str = "loading_outer"
    folds: str = "2x2"
    seed: int = 0
    out: Optional[str] = None
    jobs: Optional[int] = None

    def validate(self) -> "RunConfig":
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        self.assoc = _split_list(self.assoc)
        self.metrics = _split_list(self.metrics)
        self.modes = _split_list(self.modes)
        self.id_columns = _split_list(self.id_columns)
        for k in self.assoc:
            try:
                AssociationKind(k)
            except ValueError:
                raise ConfigError(f"unknown association kind {k!r}") from None
        bad = [m for m in self.metrics if m not in ALL_METRICS]
        if bad:
            raise ConfigError(f"unknown metrics {bad}; choose from {list(ALL_METRICS)}")
        bad = [m for m in self.modes if m not in ALL_MODES]
        if bad:
            raise ConfigError(f"unknown modes {bad}")
        if PREDICTOR_ALIASES.get(self.predictor, self.predictor) not in {p.value for p in Predictor}:
            raise ConfigError(f"unknown predictor {self.predictor!r}")
        self.fold_counts()
        if self.subcommand == "simulate":
            if self.study not in ("sim1", "sim2"):
                raise ConfigError("simulate needs --study sim1 or sim2")
            if int(self.reps) < 1:
                raise ConfigError("--reps must be positive")
            if self.gamma_grid is not None:
                try:
                    grid = parse_grid(self.gamma_grid)
                except (ValueError, ValidationError) as exc:
                    raise ConfigError(f"bad --gamma-grid: {exc}") from None
                if self.study == "sim1":
                    raise ConfigError("--gamma-grid applies only to sim2")
                if any(not 0 <= g <= 1 for g in grid):
                    raise ConfigError("gamma values must lie in [0, 1]")
        else:
            if not self.data:
                raise ConfigError(f"{self.subcommand} needs a dataset path")
            if not Path(self.data).is_file():
                raise ConfigError(f"dataset {self.data!r} does not exist")
            if self.format not in ("wide_csv", "long_csv"):
                raise ConfigError(f"unknown format {self.format!r}")
        if self.jobs is not None and int(self.jobs) == 0:
            raise ConfigError("--jobs must be nonzero")
        return self

    def fold_counts(self) -> tuple:
        try:
            a, b = (int(x) for x in str(self.folds).lower().split("x"))
        except ValueError:
            raise ConfigError(f"--folds must look like 2x2, got {self.folds!r}") from None
        if a < 2 or b < 2:
            raise ConfigError("fold counts must be at least 2")
        return a, b

    @property
    def n_jobs(self) -> int:
        return int(self.jobs) if self.jobs else (os.cpu_count() or 1)

    def echo(self) -> dict:
        """Config recorded in reports; output location and parallelism are excluded."""
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(d.items())}


def _split_list(v) -> tuple:
    if v is None:
        return ()
    if isinstance(v, str):
        return tuple(x.strip() for x in v.split(",") if x.strip())
    return tuple(v)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"subcommand"}


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    d = {k.replace("-", "_"): v for k, v in d.items()}
    unknown = sorted(set(d) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return d


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="refactor-analysis", description="Rank-1 reconstruction diagnostics.")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, data: bool):
        if data:
            p.add_argument("data", nargs="?", help="dataset CSV path")
            p.add_argument("--format", choices=("wide_csv", "long_csv"))
            p.add_argument("--missing-token")
            p.add_argument("--id-columns", help="respondent,item,response column names for long_csv")
        p.add_argument("--assoc", help="comma-separated association kinds")
        p.add_argument("--metrics", help="comma-separated metric names")
        p.add_argument("--seed", type=int)
        p.add_argument("--folds", help="row x column fold counts, e.g. 2x2")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
        p.add_argument("--jobs", type=int, help="parallel workers (default: all cores)")
        p.add_argument("--config", help="JSON file with any of these options")

    s = sub.add_parser("simulate", help="replicate a simulation study")
    s.add_argument("--study", choices=("sim1", "sim2"))
    s.add_argument("--reps", type=int)
    s.add_argument("--gamma-grid", help="lo:hi:step or comma list of general-factor loadings (sim2)")
    s.add_argument("--n", type=int, help="respondents per dataset")
    s.add_argument("--p", type=int, help="items per dataset (sim1)")
    s.add_argument("--modes", help="comma-separated subset of " + ",".join(ALL_MODES))
    common(s, data=False)

    a = sub.add_parser("analyze", help="Refactor and traditional indices for one dataset")
    common(a, data=True)
    v = sub.add_parser("verifactor", help="bi-cross-validated block prediction")
    v.add_argument("--predictor", help="loading (default) or pinv")
    common(v, data=True)
    c = sub.add_parser("compare", help="rank association kinds on one dataset")
    c.add_argument("--predictor", help="loading (default) or pinv")
    common(c, data=True)
    return ap


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    merged = {}
    if getattr(ns, "config", None):
        merged.update(_load_config_file(ns.config))
    for k, v in vars(ns).items():
        if k in _CONFIG_KEYS and v is not None:
            merged[k] = v
    try:
        cfg = RunConfig(subcommand=ns.subcommand, **merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(cfg: RunConfig):
    return DatasetSpec(cfg.data, cfg.format, cfg.id_columns or ("respondent", "item", "response"),
                       cfg.missing_token).load()


def _write(doc: ReportDocument, cfg: RunConfig) -> Path:
    out = _output_dir(cfg)
    stem = out / f"{cfg.subcommand}_report"
    write_report(doc, stem.with_suffix(".json"), "json")
    write_report(doc, stem.with_suffix(".csv"), "csv_long")
    return stem.with_suffix(".json")


# -- subcommands


def cmd_simulate(cfg: RunConfig) -> Path:
    kinds = cfg.assoc or SIM_KINDS
    metrics = cfg.metrics or ("isotonic_r2", "auc", "kendall_tau_b", "cosine", "alpha", "ecv")
    modes = cfg.modes or SIM_MODES
    fr, fc = cfg.fold_counts()
    kw = {}
    if cfg.n is not None:
        kw["n"] = int(cfg.n)
    if cfg.p is not None:
        if cfg.study == "sim2":
            raise ConfigError("--p is fixed by the factor structure in sim2")
        kw["p"] = int(cfg.p)
    rows = replicate(cfg.study, int(cfg.reps), cfg.gamma_grid, kinds, modes, metrics, int(cfg.seed),
                     cfg.n_jobs, fr, fc, **kw)
    out = _output_dir(cfg)
    write_table(rows, out / "simulate_results.csv", RESULT_COLUMNS)
    n_err = sum(1 for r in rows if r["metric"] is None)
    doc = ReportDocument(dataset={"study": cfg.study, "reps": int(cfg.reps), "failed_units": n_err},
                         config=cfg.echo(), tables={"results": rows})
    return _write(doc, cfg)


def _analyze_one(X, kind, metrics):
    return refactor_functional(X, kind, metrics or None, traditional=not metrics)


def cmd_analyze(cfg: RunConfig) -> Path:
    X = _load(cfg)
    kinds = cfg.assoc or SIM_KINDS
    metrics = tuple(cfg.metrics)
    panels = parallel_map(_analyze_one, [(X, k, metrics) for k in kinds], cfg.n_jobs)
    doc = ReportDocument(dataset_metadata(X, path=cfg.data), panels, cfg.echo())
    return _write(doc, cfg)


def _recon_metrics(cfg):
    return tuple(m for m in cfg.metrics if m in METRIC_KEYS) or METRIC_KEYS


def _verifactor_one(X, kind, cfg_dict, metrics):
    return verifactor_functional(X, BcvConfig(**cfg_dict, kind=kind), metrics)


def cmd_verifactor(cfg: RunConfig) -> Path:
    X = _load(cfg)
    kinds = cfg.assoc or ("quadrant",)
    fr, fc = cfg.fold_counts()
    bcv = dict(f_rows=fr, f_cols=fc, predictor=cfg.predictor, seed=int(cfg.seed))
    results = parallel_map(_verifactor_one, [(X, k, bcv, _recon_metrics(cfg)) for k in kinds], cfg.n_jobs)
    panels, skipped = [], []
    for kind, res in zip(kinds, results):
        panels += [res.panel, res.assembled_panel] + [f.panel for f in res.folds if f.panel is not None]
        skipped += [{"association": kind, "fold": f"{f.i},{f.j}", "reason": f.skipped}
                    for f in res.folds if f.skipped]
    meta = dataset_metadata(X, path=cfg.data,
                            skipped_folds={k: r.n_skipped for k, r in zip(kinds, results)})
    doc = ReportDocument(meta, panels, cfg.echo(), tables={"skipped_folds": skipped})
    return _write(doc, cfg)


def rank_kinds(scores: dict, lower_is_better: bool = False) -> list:
    """Competition ranking ("1224") of ``{kind: value}``; ties share a rank.

    Rows are ordered by rank and then by kind name; missing values rank last.
    """
    present = {k: v for k, v in scores.items() if v is not None}
    sign = 1.0 if lower_is_better else -1.0
    ordered = sorted(present, key=lambda k: (sign * present[k], k))
    out = []
    for k in ordered:
        rank = 1 + sum(1 for o in present.values() if sign * o < sign * present[k])
        out.append({"kind": k, "value": present[k], "rank": rank, "tied": list(present.values()).count(present[k]) > 1})
    last = len(present) + 1
    for k in sorted(set(scores) - set(present)):
        out.append({"kind": k, "value": None, "rank": last, "tied": False})
    return out


def _compare_one(X, kind, bcv, metrics):
    ref = refactor_functional(X, kind, metrics)
    vf = verifactor_functional(X, BcvConfig(**bcv, kind=kind), metrics)
    return ref, vf


def cmd_compare(cfg: RunConfig) -> Path:
    X = _load(cfg)
    kinds = tuple(sorted(cfg.assoc or SIM_KINDS))
    fr, fc = cfg.fold_counts()
    bcv = dict(f_rows=fr, f_cols=fc, predictor=cfg.predictor, seed=int(cfg.seed))
    metrics = _recon_metrics(cfg)
    results = parallel_map(_compare_one, [(X, k, bcv, metrics) for k in kinds], cfg.n_jobs)
    panels, ranking = [], []
    by_mode = {"refactor": {}, "verifactor": {}, "verifactor_assembled": {}}
    for kind, (ref, vf) in zip(kinds, results):
        panels += [ref, vf.panel, vf.assembled_panel]
        by_mode["refactor"][kind] = ref
        by_mode["verifactor"][kind] = vf.panel
        by_mode["verifactor_assembled"][kind] = vf.assembled_panel
    for mode, per_kind in by_mode.items():
        for metric in metrics:
            vals = {k: p.values.get(metric) for k, p in per_kind.items()}
            for row in rank_kinds(vals, metric in LOWER_IS_BETTER):
                ranking.append({"mode": mode, "metric": metric, **row})
    doc = ReportDocument(dataset_metadata(X, path=cfg.data), panels, cfg.echo(), tables={"ranking": ranking})
    return _write(doc, cfg)


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "verifactor": cmd_verifactor, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(ns)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        path = COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
