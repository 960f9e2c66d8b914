"""APS-controlled 2SLS/OLS with HC0 robust variance, naive baselines and bandwidth sweeps."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .aps import ApsConfig, ApsResult, simulate_aps
from .core import Dataset, derive_seed
from .errors import (ApsIvError, ConfigError, DataError, EstimationError, MissingColumn,
                     NoNondegenerateRows, SingularDesign, WeakDesignSingular)
from .serialize import dumps_json

RCOND_MIN = 1e-12


class Mode(str, enum.Enum):
    TSLS_TREATMENT = "tsls"
    OLS_RECOMMENDATION = "ols_recommendation"
    OLS_BALANCE = "ols_balance"
    OLS_NAIVE = "naive_ols"
    TSLS_NAIVE = "naive_tsls"

    @property
    def uses_aps(self) -> bool:
        return self in (Mode.TSLS_TREATMENT, Mode.OLS_RECOMMENDATION, Mode.OLS_BALANCE)


@dataclass(frozen=True)
class RegressionSpec:
    mode: Mode
    include_intercept: str = "auto"
    outcome: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.include_intercept not in ("auto", "forced"):
            raise ConfigError("include_intercept must be 'auto' or 'forced'")


@dataclass(frozen=True)
class EstimateReport:
    mode: str
    beta1: float
    se_robust: float
    coef: tuple[float, ...]
    coef_names: tuple[str, ...]
    cov: tuple[tuple[float, ...], ...]
    n_total: int
    n_used: int
    intercept_dropped: bool = False
    first_stage_gamma1: float | None = None
    first_stage_se: float | None = None
    delta: float | None = None
    draws: int | None = None
    outcome: str = "y"

    @property
    def ci95(self) -> tuple[float, float]:
        return self.beta1 - 1.96 * self.se_robust, self.beta1 + 1.96 * self.se_robust

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coef"] = list(self.coef)
        d["coef_names"] = list(self.coef_names)
        d["cov"] = [list(r) for r in self.cov]
        return d

    def to_json(self) -> str:
        return dumps_json(self.to_dict())


@dataclass(frozen=True)
class SweepEntry:
    """Outcome of one bandwidth in a sweep: a report or a recorded failure."""

    delta: float
    report: EstimateReport | None = None
    error: str | None = None
    error_type: str | None = None
    n_nondegenerate: int = 0

    @property
    def ok(self) -> bool:
        return self.report is not None

    def to_dict(self) -> dict:
        return {"delta": self.delta, "ok": self.ok, "n_nondegenerate": self.n_nondegenerate,
                "report": None if self.report is None else self.report.to_dict(),
                "error_type": self.error_type, "error": self.error}


# ------------------------------------------------------------------ linear algebra

def _check_rcond(m: np.ndarray, exc: type[EstimationError]) -> None:
    # Equilibrate rows and columns so the test is scale-free.
    r = np.linalg.norm(m, axis=1)
    c = np.linalg.norm(m, axis=0)
    if np.any(r == 0) or np.any(c == 0) or not np.all(np.isfinite(m)):
        raise exc("cross-moment matrix has a zero row or column")
    s = np.linalg.svd(m / r[:, None] / c[None, :], compute_uv=False)
    if s[-1] / s[0] < RCOND_MIN:
        raise exc(f"cross-moment matrix is numerically singular (rcond {s[-1] / s[0]:.3g})")


def _inv_qr(m: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(m)
    return solve_triangular(r, q.T)


def iv_fit(y: np.ndarray, x: np.ndarray, w: np.ndarray,
           singular: type[EstimationError] = SingularDesign):
    """Exactly identified IV of y on regressors x with instruments w (OLS when w is x).

    Returns coefficients and the HC0 sandwich covariance
    (W'X)^-1 (sum e^2 w w') (X'W)^-1.
    """
    m = w.T @ x
    _check_rcond(m, singular)
    m_inv = _inv_qr(m)
    beta = m_inv @ (w.T @ y)
    resid = y - x @ beta
    meat = (w * (resid ** 2)[:, None]).T @ w
    cov = m_inv @ meat @ m_inv.T
    return beta, 0.5 * (cov + cov.T)


# ------------------------------------------------------------------ estimators

def _column(dataset: Dataset, name) -> np.ndarray:
    if not isinstance(name, str):
        arr = np.asarray(name, dtype=float)
        if arr.shape != (dataset.n,):
            raise DataError("column length does not match dataset")
        return arr
    if name == "y":
        return dataset.y
    if name == "d":
        return dataset.d
    if name == "z":
        return dataset.z
    if name in dataset.extra:
        return dataset.extra[name]
    if name in dataset.cont_names:
        return dataset.raw_x_cont()[:, dataset.cont_names.index(name)]
    if name in dataset.disc_names:
        return dataset.x_disc[:, dataset.disc_names.index(name)].astype(float)
    raise MissingColumn(f"no column named {name!r}")


def _aps_sample(dataset: Dataset, aps: ApsResult, include_intercept: str):
    if aps.n != dataset.n:
        raise DataError(f"APS has {aps.n} rows but dataset has {dataset.n}")
    used = np.asarray(aps.nondegenerate)
    if not used.any():
        raise NoNondegenerateRows("no observation has APS strictly between 0 and 1")
    p = aps.values[used]
    drop = include_intercept == "auto" and bool(np.all(p == p[0]))
    return used, p, drop


def _design(cols: Sequence[np.ndarray], names: Sequence[str], drop_intercept: bool):
    if drop_intercept:
        return np.column_stack(cols[1:]), tuple(names[1:])
    return np.column_stack(cols), tuple(names)


def _report(mode, beta, cov, names, key, n_total, n_used, dropped, aps, outcome, fs=None):
    k = names.index(key)
    return EstimateReport(
        mode=mode.value, beta1=float(beta[k]), se_robust=float(np.sqrt(max(cov[k, k], 0.0))),
        coef=tuple(float(b) for b in beta), coef_names=names,
        cov=tuple(tuple(float(v) for v in row) for row in cov),
        n_total=n_total, n_used=n_used, intercept_dropped=dropped,
        first_stage_gamma1=None if fs is None else fs[0],
        first_stage_se=None if fs is None else fs[1],
        delta=None if aps is None or aps.config is None else aps.config.delta,
        draws=None if aps is None or aps.config is None else aps.config.draws, outcome=outcome)


def tsls_aps(dataset: Dataset, aps: ApsResult, include_intercept: str = "auto",
             outcome="y") -> EstimateReport:
    """2SLS of Y on (1, D, p^s) instrumented by (1, Z, p^s) over rows with 0 < p^s < 1.

    The first stage D on (1, Z, p^s) is fitted on the same rows.  The
    intercept is dropped when every used p^s takes one common value.
    """
    RegressionSpec(Mode.TSLS_TREATMENT, include_intercept)
    used, p, drop = _aps_sample(dataset, aps, include_intercept)
    y = _column(dataset, outcome)[used]
    d, z = dataset.d[used], dataset.z[used]
    one = np.ones(len(p))
    x, names = _design([one, d, p], ["const", "d", "aps"], drop)
    w, fs_names = _design([one, z, p], ["const", "z", "aps"], drop)
    g, gcov = iv_fit(d, w, w, WeakDesignSingular)
    beta, cov = iv_fit(y, x, w, WeakDesignSingular)
    k = fs_names.index("z")
    fs = (float(g[k]), float(np.sqrt(max(gcov[k, k], 0.0))))
    return _report(Mode.TSLS_TREATMENT, beta, cov, names, "d", dataset.n, int(used.sum()), drop,
                   aps, outcome if isinstance(outcome, str) else "y", fs)


def ols_recommendation(dataset: Dataset, aps: ApsResult, include_intercept: str = "auto",
                       outcome="y") -> EstimateReport:
    """OLS of Y on (1, Z, p^s) over nondegenerate rows; beta1 is the Z coefficient."""
    return _ols_on_z(Mode.OLS_RECOMMENDATION, dataset, aps, outcome, include_intercept)


def ols_balance(dataset: Dataset, covariate, aps: ApsResult,
                include_intercept: str = "auto") -> EstimateReport:
    """OLS of covariate W on (1, Z, p^s) over nondegenerate rows.

    ``covariate`` is a column name (extra, covariate or y/d/z) or an array.
    """
    return _ols_on_z(Mode.OLS_BALANCE, dataset, aps, covariate, include_intercept)


def _ols_on_z(mode, dataset, aps, outcome, include_intercept):
    RegressionSpec(mode, include_intercept)
    used, p, drop = _aps_sample(dataset, aps, include_intercept)
    y = _column(dataset, outcome)[used]
    z = dataset.z[used]
    x, names = _design([np.ones(len(p)), z, p], ["const", "z", "aps"], drop)
    beta, cov = iv_fit(y, x, x, WeakDesignSingular)
    return _report(mode, beta, cov, names, "z", dataset.n, int(used.sum()), drop, aps,
                   outcome if isinstance(outcome, str) else "w")


def naive_ols(dataset: Dataset, outcome="y") -> EstimateReport:
    """OLS of Y on (1, D) over the full sample."""
    y = _column(dataset, outcome)
    x = np.column_stack([np.ones(dataset.n), dataset.d])
    beta, cov = iv_fit(y, x, x)
    return _report(Mode.OLS_NAIVE, beta, cov, ("const", "d"), "d", dataset.n, dataset.n, False,
                   None, outcome if isinstance(outcome, str) else "y")


def naive_tsls(dataset: Dataset, outcome="y") -> EstimateReport:
    """2SLS of Y on (1, D) instrumented by (1, Z), no controls; equals the Wald ratio."""
    y = _column(dataset, outcome)
    one = np.ones(dataset.n)
    x = np.column_stack([one, dataset.d])
    w = np.column_stack([one, dataset.z])
    g, gcov = iv_fit(dataset.d, w, w)
    beta, cov = iv_fit(y, x, w)
    fs = (float(g[1]), float(np.sqrt(max(gcov[1, 1], 0.0))))
    return _report(Mode.TSLS_NAIVE, beta, cov, ("const", "d"), "d", dataset.n, dataset.n, False,
                   None, outcome if isinstance(outcome, str) else "y", fs)


ESTIMATORS = {
    "tsls": tsls_aps,
    "ols_recommendation": ols_recommendation,
    "naive_ols": naive_ols,
    "naive_tsls": naive_tsls,
}


def run_estimator(name: str, dataset: Dataset, aps: ApsResult | None) -> EstimateReport:
    if name not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {name!r}; expected one of {', '.join(ESTIMATORS)}")
    if name.startswith("naive"):
        return ESTIMATORS[name](dataset)
    return ESTIMATORS[name](dataset, aps)


# ------------------------------------------------------------------ sweeps

def sweep_seed(seed: int, delta: float) -> int:
    """Sub-seed for one bandwidth, keyed by the value of delta (not its position)."""
    return derive_seed(seed, float(delta))


def bandwidth_sweep(dataset: Dataset, rule, deltas: Sequence[float], draws: int, seed: int = 0,
                    estimator: str = "tsls", threads: int | None = None,
                    keep_aps: bool = False):
    """One estimate per bandwidth; failures are recorded, never raised.

    Returns a list of :class:`SweepEntry`, plus the list of APS results when
    ``keep_aps`` is set.
    """
    deltas = [float(v) for v in deltas]
    if not deltas:
        raise ConfigError("deltas must be non-empty")
    if any(not v > 0 for v in deltas):
        raise ConfigError("every delta must be positive")
    entries, results = [], []
    for delta in deltas:
        aps = simulate_aps(dataset, rule, ApsConfig(delta, draws, sweep_seed(seed, delta)), threads)
        results.append(aps)
        try:
            rep = run_estimator(estimator, dataset, aps)
            entries.append(SweepEntry(delta, rep, n_nondegenerate=aps.n_nondegenerate))
        except ApsIvError as exc:
            entries.append(SweepEntry(delta, None, str(exc), type(exc).__name__, aps.n_nondegenerate))
    return (entries, results) if keep_aps else entries


def sweep_table(entries: Sequence[SweepEntry]) -> str:
    """Aligned text table: one column per bandwidth; first stage, coefficient, SE and N rows."""
    head = ["", *(f"delta={e.delta:g}" for e in entries)]

    def cell(e, f):
        return "failed" if e.report is None else f(e.report)

    def num(v):
        return "" if v is None else f"{v:.3f}"

    rows = [head,
            ["first stage", *(cell(e, lambda r: num(r.first_stage_gamma1)) for e in entries)],
            ["", *(cell(e, lambda r: "" if r.first_stage_se is None else f"({r.first_stage_se:.3f})")
                   for e in entries)],
            ["estimate", *(cell(e, lambda r: num(r.beta1)) for e in entries)],
            ["", *(cell(e, lambda r: f"({r.se_robust:.3f})") for e in entries)],
            ["N", *(cell(e, lambda r: str(r.n_used)) for e in entries)]]
    widths = [max(len(r[j]) for r in rows) for j in range(len(head))]
    lines = ["  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths)))
             .rstrip() for r in rows]
    return "\n".join(lines) + "\n"


__all__ = ["Mode", "RegressionSpec", "EstimateReport", "SweepEntry", "iv_fit", "tsls_aps",
           "ols_recommendation", "ols_balance", "naive_ols", "naive_tsls", "run_estimator",
           "bandwidth_sweep", "sweep_seed", "sweep_table", "ESTIMATORS", "RCOND_MIN"]
