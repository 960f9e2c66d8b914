"""Command-line batch interface.

Two modes:

* ``--input data.csv --columns roles.json --rule rule.json``: standardize the
  continuous covariates, simulate the APS at each bandwidth and run the
  selected estimators.  Writes ``aps.csv``, ``estimates.json`` and
  ``sweep.txt``.
* ``--dgp dgp.json``: draw one simulated sample (or, with
  ``--replications R``, run a Monte Carlo study writing ``mc_summary.csv``
  and ``mc_summary.txt``).

JSON arguments may be file paths or inline JSON text.  A ``--config`` file
may hold any of the flag values under the same names (flags win).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping, Sequence

import numpy as np

from .algorithms import rule_from_descriptor
from .aps import ApsConfig, default_draws, simulate_aps
from .core import Dataset, standardize
from .errors import (ApsIvError, ConfigError, DataError, EmptyDataset, EstimationError,
                     MissingColumn, NonBinary, ParseError)
from .estimators import (ESTIMATORS, SweepEntry, ols_balance, run_estimator, sweep_seed,
                         sweep_table)
from .serialize import dumps_json, fmt_csv
from .simulation import MC_ESTIMATORS, DgpConfig, generate_sample, run_monte_carlo

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION, EXIT_INTERNAL = 0, 2, 3, 4, 1

ROLES = ("outcome", "treatment", "instrument", "continuous", "discrete", "balance")
FORMATS = ("json", "csv", "table")
DEFAULT_ESTIMATORS = ("tsls", "naive_ols", "naive_tsls")

# Only plain decimal notation with '.' is accepted.
_FLOAT_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_INT_RE = re.compile(r"[+-]?\d+")


# ------------------------------------------------------------------ CSV I/O

def _parse_float(text: str, row: int, column: str) -> float:
    if not _FLOAT_RE.fullmatch(text):
        raise ParseError(row, column, text)
    return float(text)


def ingest_csv(path, schema: Mapping[str, Any]) -> Dataset:
    """Read a headed CSV into a Dataset using column roles.

    ``schema`` maps ``outcome``, ``treatment``, ``instrument`` to column
    names and ``continuous``, ``discrete``, ``balance`` to lists of names.
    Set ``continuous_treatment`` to allow a real-valued treatment.  Row
    numbers in errors are file line numbers (the header is line 1).
    """
    schema = dict(schema)
    unknown = set(schema) - set(ROLES) - {"continuous_treatment"}
    if unknown:
        raise ConfigError(f"unknown column roles: {', '.join(sorted(unknown))}")
    for role in ("outcome", "treatment", "instrument"):
        if not isinstance(schema.get(role), str):
            raise ConfigError(f"schema needs a column name for {role!r}")
    cont = list(schema.get("continuous", []))
    disc = list(schema.get("discrete", []))
    bal = list(schema.get("balance", []))
    if not cont:
        raise ConfigError("schema needs at least one continuous covariate")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: file is empty") from None
        index = {h: k for k, h in enumerate(header)}
        wanted = [schema["outcome"], schema["treatment"], schema["instrument"], *cont, *disc, *bal]
        missing = [c for c in dict.fromkeys(wanted) if c not in index]
        if missing:
            raise MissingColumn(f"missing columns: {', '.join(missing)}")
        cols: dict[str, list] = {c: [] for c in dict.fromkeys(wanted)}
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(line, None, ",".join(rec))
            for c in cols:
                text = rec[index[c]].strip()
                if c in disc:
                    if not _INT_RE.fullmatch(text):
                        raise ParseError(line, c, text)
                    cols[c].append(int(text))
                else:
                    cols[c].append(_parse_float(text, line, c))
    if not cols[schema["outcome"]]:
        raise EmptyDataset(f"{path}: no data rows")
    for role in ("treatment", "instrument"):
        if role == "treatment" and schema.get("continuous_treatment"):
            continue
        name = schema[role]
        bad = [v for v in cols[name] if v not in (0.0, 1.0)]
        if bad:
            raise NonBinary(name, bad[0])
    arr = {c: np.asarray(v, dtype=np.int64 if c in disc else float) for c, v in cols.items()}
    return Dataset(
        y=arr[schema["outcome"]], d=arr[schema["treatment"]], z=arr[schema["instrument"]],
        x_cont=np.column_stack([arr[c] for c in cont]),
        x_disc=np.column_stack([arr[c] for c in disc]) if disc else None,
        extra={c: arr[c] for c in bal}, cont_names=tuple(cont), disc_names=tuple(disc),
        continuous_treatment=bool(schema.get("continuous_treatment", False)))


def write_csv(dataset: Dataset, path) -> dict:
    """Write ``dataset`` (raw covariate units) and return the matching schema."""
    cols = [("y", dataset.y), ("d", dataset.d), ("z", dataset.z)]
    x = dataset.raw_x_cont()
    cols += [(name, x[:, j]) for j, name in enumerate(dataset.cont_names)]
    cols += [(name, dataset.x_disc[:, j]) for j, name in enumerate(dataset.disc_names)]
    cols += list(dataset.extra.items())
    names = [c for c, _ in cols]
    if len(set(names)) != len(names):
        raise DataError("column names collide")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(dataset.n):
            fh.write(",".join(fmt_csv(v[i]) for _, v in cols) + "\n")
    return {"outcome": "y", "treatment": "d", "instrument": "z",
            "continuous": list(dataset.cont_names), "discrete": list(dataset.disc_names),
            "balance": list(dataset.extra), "continuous_treatment": dataset.continuous_treatment}


# ------------------------------------------------------------------ configuration

@dataclass
class RunConfig:
    input: str | None = None
    columns: dict | None = None
    dgp: dict | None = None
    rule: dict | None = None
    deltas: list[float] = field(default_factory=lambda: [0.1])
    draws: int | None = None
    seed: int = 0
    estimators: list[str] | None = None
    out: str = "."
    formats: list[str] = field(default_factory=lambda: list(FORMATS))
    replications: int | None = None

    def validate(self) -> None:
        if (self.input is None) == (self.dgp is None):
            raise ConfigError("exactly one of --input and --dgp is required")
        if self.input is not None:
            if self.columns is None:
                raise ConfigError("--input needs --columns")
            if self.rule is None:
                raise ConfigError("--input needs --rule")
        if not self.deltas or any(not (isinstance(d, (int, float)) and d > 0) for d in self.deltas):
            raise ConfigError("deltas must be a non-empty list of positive numbers")
        if self.draws is not None and (int(self.draws) != self.draws or self.draws < 1):
            raise ConfigError("draws must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad or not self.formats:
            raise ConfigError(f"formats must be drawn from {', '.join(FORMATS)}")
        if self.replications is not None and self.dgp is None:
            raise ConfigError("--replications needs --dgp")


def _load_json(value, what: str):
    if value is None or isinstance(value, (dict, list)):
        return value
    text = str(value).strip()
    if not text.startswith(("{", "[")):
        try:
            with open(text) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {what} file {value!r}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc}") from None


def _split_list(value, cast, what: str):
    if value is None or isinstance(value, list):
        return value
    try:
        return [cast(v.strip()) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {what} list {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="aps-iv",
        description="Treatment effects from algorithmic recommendations via APS-controlled 2SLS.")
    src = ap.add_argument_group("data source (exactly one)")
    src.add_argument("--input", help="CSV file with a header row")
    src.add_argument("--dgp", help="simulation config (JSON file or inline JSON)")
    ap.add_argument("--config", help="JSON file with default values for any flag")
    ap.add_argument("--columns", help="column roles for --input (JSON file or inline)")
    ap.add_argument("--rule", help="decision rule descriptor (JSON file or inline)")
    ap.add_argument("--deltas", help="comma-separated bandwidths, e.g. 0.01,0.05")
    ap.add_argument("--draws", type=int, help="simulation draws S (default max(1000, n^0.6))")
    ap.add_argument("--seed", type=int, help="master seed (default 0)")
    ap.add_argument("--estimators",
                    help=f"comma-separated subset of {', '.join(ESTIMATORS)}, balance"
                         f" (Monte Carlo: {', '.join(MC_ESTIMATORS)})")
    ap.add_argument("--out", help="output directory (default .)")
    ap.add_argument("--format", dest="formats", help="comma-separated subset of json,csv,table")
    ap.add_argument("--replications", type=int, help="Monte Carlo replications (with --dgp)")
    return ap


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    base: dict[str, Any] = {}
    if args.config:
        base = _load_json(args.config, "config")
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
        if "format" in base:
            base["formats"] = base.pop("format")
        known = {f.name for f in fields(RunConfig)}
        extra = set(base) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    for k, v in vars(args).items():
        if k != "config" and v is not None:
            base[k] = v
    cfg = RunConfig(**base)
    cfg.columns = _load_json(cfg.columns, "columns")
    cfg.dgp = _load_json(cfg.dgp, "dgp")
    cfg.rule = _load_json(cfg.rule, "rule")
    cfg.deltas = _split_list(cfg.deltas, float, "deltas")
    cfg.estimators = _split_list(cfg.estimators, str, "estimators")
    cfg.formats = _split_list(cfg.formats, str, "format")
    return cfg


# ------------------------------------------------------------------ execution

def _dgp_config(spec: Mapping, seed: int) -> DgpConfig:
    spec = dict(spec)
    spec.setdefault("seed", seed)
    names = {f.name for f in fields(DgpConfig)}
    extra = set(spec) - names
    if extra:
        raise ConfigError(f"unknown dgp keys: {', '.join(sorted(extra))}")
    try:
        return DgpConfig(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad dgp spec: {exc}") from None


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _aps_csv(results) -> str:
    buf = io.StringIO()
    buf.write("row,delta,aps,nondegenerate\n")
    for res in results:
        d = fmt_csv(res.config.delta)
        for i, (v, nd) in enumerate(zip(res.values, res.nondegenerate)):
            buf.write(f"{i},{d},{fmt_csv(v)},{int(nd)}\n")
    return buf.getvalue()


def _run_estimation(cfg: RunConfig, dataset: Dataset, rule, source: dict) -> int:
    std, smap = standardize(dataset)
    draws = cfg.draws if cfg.draws is not None else default_draws(dataset.n)
    names = cfg.estimators or list(DEFAULT_ESTIMATORS)
    for name in names:
        if name not in ESTIMATORS and name != "balance":
            raise ConfigError(f"unknown estimator {name!r}")
    results, sweeps, naive = [], {}, {}
    for name in names:
        if name.startswith("naive"):
            naive[name] = run_estimator(name, std, None).to_dict()
    aps_names = [n for n in names if not n.startswith("naive")]
    for delta in cfg.deltas:
        aps = simulate_aps(std, rule, ApsConfig(delta, draws, sweep_seed(cfg.seed, delta)))
        results.append(aps)
        for name in aps_names:
            targets = ([(f"balance:{c}", c) for c in std.extra] if name == "balance"
                       else [(name, None)])
            for label, col in targets:
                try:
                    rep = (ols_balance(std, col, aps) if col is not None
                           else run_estimator(name, std, aps))
                    entry = SweepEntry(delta, rep, n_nondegenerate=aps.n_nondegenerate)
                except EstimationError as exc:
                    entry = SweepEntry(delta, None, str(exc), type(exc).__name__,
                                       aps.n_nondegenerate)
                sweeps.setdefault(label, []).append(entry)
    payload = {
        "source": source,
        "n": dataset.n,
        "seed": cfg.seed,
        "draws": draws,
        "deltas": list(cfg.deltas),
        "rule": _rule_descriptor(rule),
        "standardization": {"means": list(smap.means), "stddevs": list(smap.stddevs)},
        "naive": naive,
        "sweeps": {k: [e.to_dict() for e in v] for k, v in sweeps.items()},
    }
    os.makedirs(cfg.out, exist_ok=True)
    if "json" in cfg.formats:
        _write(os.path.join(cfg.out, "estimates.json"), dumps_json(payload))
    if "csv" in cfg.formats:
        _write(os.path.join(cfg.out, "aps.csv"), _aps_csv(results))
    if "table" in cfg.formats:
        text = "".join(f"[{k}]\n{sweep_table(v)}\n" for k, v in sweeps.items())
        _write(os.path.join(cfg.out, "sweep.txt"), text)
    ok = bool(naive) or any(e.ok for v in sweeps.values() for e in v)
    return EXIT_OK if ok else EXIT_ESTIMATION


def _rule_descriptor(rule):
    try:
        return rule.descriptor
    except ConfigError:
        return {"kind": rule.kind, **{k: v for k, v in rule.params.items()
                                       if isinstance(v, (int, float, str))}}


def _run_mc(cfg: RunConfig, dgp: DgpConfig) -> int:
    draws = cfg.draws if cfg.draws is not None else 400
    estimators = cfg.estimators or list(MC_ESTIMATORS)
    summary = run_monte_carlo(dgp, cfg.deltas, draws, estimators, cfg.replications)
    os.makedirs(cfg.out, exist_ok=True)
    if "csv" in cfg.formats:
        _write(os.path.join(cfg.out, "mc_summary.csv"), summary.to_csv())
    if "table" in cfg.formats:
        _write(os.path.join(cfg.out, "mc_summary.txt"), summary.to_table())
    if "json" in cfg.formats:
        payload = {"dgp": asdict(dgp), "draws": draws, "deltas": list(cfg.deltas),
                   "replications": cfg.replications,
                   "estimands": asdict(summary.estimands),
                   "cells": [asdict(c) for c in summary.cells]}
        _write(os.path.join(cfg.out, "estimates.json"), dumps_json(payload))
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the exit status."""
    cfg.validate()
    if cfg.dgp is not None:
        dgp = _dgp_config(cfg.dgp, cfg.seed)
        if cfg.replications is not None:
            return _run_mc(cfg, dgp)
        ds, _, rule = generate_sample(dgp)
        return _run_estimation(cfg, ds, rule, {"dgp": asdict(dgp)})
    dataset = ingest_csv(cfg.input, cfg.columns)
    rule = rule_from_descriptor(cfg.rule)
    return _run_estimation(cfg, dataset, rule, {"input": os.path.basename(cfg.input)})


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, EstimationError):
        return EXIT_ESTIMATION
    return EXIT_INTERNAL


def error_payload(exc: BaseException) -> dict:
    info = {"error": type(exc).__name__, "message": str(exc), "exit_code": _exit_code(exc)}
    for attr in ("row", "column", "value"):
        if hasattr(exc, attr):
            v = getattr(exc, attr)
            info[attr] = v if isinstance(v, (int, str)) or v is None else str(v)
    return info


def main(argv: Sequence[str] | None = None) -> int:
    cfg = None
    try:
        cfg = config_from_args(argv)
        return run(cfg)
    except (ApsIvError, OSError) as exc:
        if isinstance(exc, OSError):
            exc = DataError(f"{exc.filename}: {exc.strerror}")
        info = error_payload(exc)
        sys.stderr.write(dumps_json(info))
        if cfg is not None and cfg.out and os.path.isdir(cfg.out):
            _write(os.path.join(cfg.out, "error.json"), dumps_json(info))
        return info["exit_code"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
