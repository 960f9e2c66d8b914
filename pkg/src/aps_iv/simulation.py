"""Simulation DGP with an ML-trained recommendation rule, oracle estimands and Monte Carlo.

The covariates are correlated Gaussians, recommendations come from a
randomized band of the first covariate plus a deterministic rule
``1{tau_pred(x) >= 0}`` where ``tau_pred`` is a pair of regression trees fit
once on an independent surrogate sample.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .algorithms import DecisionRule, cares_eligible, cares_funding
from .aps import ApsConfig, ApsResult, resolve_threads, simulate_aps
from .core import Dataset, PotentialOutcomes, derive_seed, standardize
from .errors import (ApsIvError, ConfigError, InsufficientSurrogate, NoCompliers,
                     TooManyFailures)
from .estimators import EstimateReport, naive_ols, naive_tsls, tsls_aps
from .serialize import fmt_csv
from .tree import RegressionTree

# Off-diagonal pattern of V for p = 100 (1-based): rows 2..6, columns 35, 66, 78.
_V_ROWS = (2, 3, 4, 5, 6)
_V_COL_FRACTIONS = (0.35, 0.66, 0.78)

# Seed keys for the independent pieces of one configuration.
_KEY_PARAMS, _KEY_SURROGATE, _KEY_SAMPLE, _KEY_APS, _KEY_ORACLE = range(5)


@dataclass(frozen=True)
class DgpConfig:
    n: int = 10_000
    p: int = 100
    model: str = "A"
    band: tuple[float, float] = (0.495, 0.505)
    seed: int = 0
    surrogate_n: int = 2_000
    y0_signal: float = 0.75
    y0_noise: float = 0.25
    effect_noise: float = 1.0
    surrogate_signal: float = 0.5
    surrogate_noise: float = 0.5
    tree_depth: int = 4
    tree_min_leaf: int = 10

    def __post_init__(self):
        object.__setattr__(self, "model", str(self.model).upper())
        object.__setattr__(self, "band", tuple(float(b) for b in self.band))
        if self.model not in ("A", "B"):
            raise ConfigError("model must be 'A' or 'B'")
        lo, hi = self.band
        if not 0 <= lo < hi <= 1:
            raise ConfigError("band needs 0 <= lower < upper <= 1")
        if self.n < 1 or self.p < 1 or self.surrogate_n < 1:
            raise ConfigError("n, p and surrogate_n must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass(frozen=True)
class DgpParams:
    sigma: np.ndarray
    chol: np.ndarray
    alpha0: np.ndarray
    alpha1: np.ndarray


def _sparsity_pattern(p: int) -> list[tuple[int, int]]:
    rows = [r - 1 for r in _V_ROWS if r <= p]
    # Column 1 stays uncoupled so X1, which defines the RCT band, is independent of the rest.
    cols = sorted({min(p, max(2, int(math.floor(f * p + 0.5)))) - 1 for f in _V_COL_FRACTIONS})
    return [(i, j) for i in rows for j in cols if i != j]


def make_params(config: DgpConfig) -> DgpParams:
    """Covariance V V with a sparse V, and coefficient vectors with X'alpha of unit variance."""
    p = config.p
    rng = np.random.default_rng(derive_seed(config.seed, _KEY_PARAMS))
    v = np.eye(p)
    for i, j in _sparsity_pattern(p):
        v[i, j] = v[j, i] = rng.uniform(-0.5, 0.5)
    sigma = v @ v
    a1 = rng.uniform(-150, 200, p)
    a0 = rng.uniform(-100, 100, p)
    half = p // 2
    a0[:half] = a1[:half]

    def unit(a):
        s = float(a @ sigma @ a)
        return a / math.sqrt(s)

    # Cholesky with a tiny ridge in case V is singular.
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(sigma + 1e-12 * np.eye(p))
    return DgpParams(sigma, chol, unit(a0), unit(a1))


@dataclass
class TauPredictor:
    """tau_pred(x) = mu1(x) - mu0(x) from two regression trees."""

    mu1: RegressionTree
    mu0: RegressionTree

    def __call__(self, x) -> np.ndarray:
        return self.mu1.predict(x) - self.mu0.predict(x)


def fit_tau_pred(x, y, z, max_depth: int = 4, min_leaf: int = 10) -> TauPredictor:
    """Fit outcome trees separately on the z = 1 and z = 0 subsamples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z)
    if len(y) < 50:
        raise InsufficientSurrogate(f"surrogate sample has {len(y)} rows; need at least 50")
    if min((z == 1).sum(), (z == 0).sum()) < 2 * min_leaf:
        raise InsufficientSurrogate("surrogate sample has too few rows in one arm")
    mu1 = RegressionTree(max_depth, min_leaf).fit(x[z == 1], y[z == 1])
    mu0 = RegressionTree(max_depth, min_leaf).fit(x[z == 0], y[z == 0])
    return TauPredictor(mu1, mu0)


def _draw_units(config: DgpConfig, params: DgpParams, rng: np.random.Generator, n: int,
                first_quantiles: tuple[float, float] | None = None):
    """Covariates, Y(0) and noise; ``first_quantiles`` restricts X1 to that quantile band."""
    g = rng.standard_normal((n, config.p))
    if first_quantiles is not None:
        # The Cholesky factor is lower triangular, so X1 depends on g[:, 0] only.
        g[:, 0] = ndtri(rng.uniform(*first_quantiles, size=n))
    x = g @ params.chol.T
    e0, e1, u = rng.standard_normal((3, n))
    y0 = config.y0_signal * (x @ params.alpha0) + config.y0_noise * e0
    return x, y0, e1, u


def surrogate_sample(config: DgpConfig, params: DgpParams):
    """Past-experiment sample used only to train tau_pred."""
    rng = np.random.default_rng(derive_seed(config.seed, _KEY_SURROGATE))
    m = config.surrogate_n
    x, y0, e1, u = _draw_units(config, params, rng, m)
    y1 = y0 + config.surrogate_signal * (x @ params.alpha1) + config.surrogate_noise * e1
    z = (rng.random(m) < 0.5).astype(float)
    d = z * (y1 - y0 > u)
    y = np.where(d == 1, y1, y0)
    return x, y, z


@dataclass
class DgpModel:
    """Everything held fixed across replications: parameters and tau_pred."""

    config: DgpConfig
    params: DgpParams
    tau_pred: Callable[[np.ndarray], np.ndarray]


def build_model(config: DgpConfig, tau_pred: Callable | None = None) -> DgpModel:
    params = make_params(config)
    if tau_pred is None:
        x, y, z = surrogate_sample(config, params)
        tau_pred = fit_tau_pred(x, y, z, config.tree_depth, config.tree_min_leaf)
    return DgpModel(config, params, tau_pred)


def band_rule(tau_pred: Callable, p: int, lower: float, upper: float, index: int = 0,
              inside_prob: float = 0.5) -> DecisionRule:
    """``inside_prob`` on lower <= x[index] <= upper, else 1{tau_pred(x) >= 0}."""
    def fn(xc, xd):
        inside = (xc[:, index] >= lower) & (xc[:, index] <= upper)
        out = np.full(len(xc), inside_prob)
        if (~inside).any():
            out[~inside] = (np.asarray(tau_pred(xc[~inside])) >= 0).astype(float)
        return out

    return DecisionRule(fn, p, kind="custom",
                        params={"index": index, "lower": lower, "upper": upper,
                                "inside_prob": inside_prob})


def _potential_outcomes(config, params, x, y0, e1, u):
    if config.model == "A":
        y1 = y0 + config.effect_noise * e1
    else:
        y1 = y0 + x @ params.alpha1
    d1 = (y1 - y0 > u).astype(float)
    return PotentialOutcomes(y1, y0, d1, np.zeros(len(y0)))


def generate_sample(config: DgpConfig, replication: int = 0, model: DgpModel | None = None,
                    tau_pred: Callable | None = None):
    """One simulated sample: ``(Dataset, PotentialOutcomes, DecisionRule)``.

    Covariates are returned in raw units.  The band edges are empirical
    quantiles of the first covariate in this sample and are frozen into the
    returned rule.  ``tau_pred`` overrides the fitted predictor.
    """
    if model is None:
        model = build_model(config, tau_pred)
    elif tau_pred is not None:
        model = replace(model, tau_pred=tau_pred)
    rng = np.random.default_rng(derive_seed(config.seed, _KEY_SAMPLE, replication))
    x, y0, e1, u = _draw_units(config, model.params, rng, config.n)
    pot = _potential_outcomes(config, model.params, x, y0, e1, u)
    lo, hi = (float(q) for q in np.quantile(x[:, 0], config.band))
    rule = band_rule(model.tau_pred, config.p, lo, hi)
    inside = (x[:, 0] >= lo) & (x[:, 0] <= hi)
    z = np.empty(config.n)
    z[inside] = (rng.random(int(inside.sum())) < 0.5)
    z[~inside] = (np.asarray(model.tau_pred(x[~inside])) >= 0)
    y, d = pot.realize(z)
    ds = Dataset(y=y, x_cont=x, d=d, z=z, extra={"rct": inside.astype(float)})
    return ds, pot, rule


# ------------------------------------------------------------------ estimands

@dataclass(frozen=True)
class OracleEstimands:
    ate: float
    ate_rct: float
    late: float
    late_rct: float
    weighted_beta1: float | None = None
    delta: float | None = None

    def get(self, name: str) -> float:
        return float(getattr(self, name))


def propensity_weighted_effect(aps_values, pot: PotentialOutcomes) -> float:
    """sum w (Y1 - Y0) / sum w with w = p (1 - p) (D1 - D0)."""
    p = np.asarray(aps_values, dtype=float)
    w = p * (1 - p) * pot.complier_shift
    total = w.sum()
    if total == 0:
        raise NoCompliers("all weights are zero")
    return float((w * pot.effect).sum() / total)


def oracle_estimands(pot: PotentialOutcomes, dataset: Dataset | None = None,
                     rule: DecisionRule | None = None, delta: float | None = None,
                     aps_exact=None, rct_mask=None, draws: int = 10_000,
                     seed: int = 0) -> OracleEstimands:
    """Sample analogs of ATE, ATE(RCT), LATE, LATE(RCT) and the weighted estimand.

    The RCT segment is ``rct_mask`` if given, else the rows where the rule's
    probability lies strictly between 0 and 1.  The weighted estimand uses
    ``aps_exact`` when given, otherwise the rule's analytic fixed-bandwidth
    APS, otherwise a simulated APS with ``draws`` draws.
    """
    effect = pot.effect
    compliers = pot.complier_shift != 0
    if not compliers.any():
        raise NoCompliers("no unit has D(1) != D(0)")
    if rct_mask is None and rule is not None and dataset is not None:
        a = rule(dataset.raw_x_cont(), dataset.x_disc)
        rct_mask = (a > 0) & (a < 1)
    if rct_mask is not None:
        rct_mask = np.asarray(rct_mask, dtype=bool)
        ate_rct = float(effect[rct_mask].mean()) if rct_mask.any() else math.nan
        both = rct_mask & compliers
        late_rct = float(effect[both].mean()) if both.any() else math.nan
    else:
        ate_rct = late_rct = math.nan
    weighted = None
    if delta is not None:
        if aps_exact is None:
            if dataset is None or rule is None:
                raise ConfigError("weighted estimand needs aps_exact or (dataset, rule)")
            if rule.aps_fixed is not None and dataset.standardization is None:
                aps_exact = rule.analytic_aps_fixed(dataset.x_cont, delta, dataset.x_disc)
            else:
                aps_exact = simulate_aps(dataset, rule, ApsConfig(delta, draws, seed)).values
        weighted = propensity_weighted_effect(aps_exact, pot)
    return OracleEstimands(float(effect.mean()), ate_rct, float(effect[compliers].mean()),
                           late_rct, weighted, delta)


def population_estimands(config: DgpConfig, model: DgpModel | None = None,
                         n_oracle: int = 2_000_000, chunk: int = 250_000) -> OracleEstimands:
    """Large-sample estimands; the RCT band uses population quantiles of X1.

    The RCT-segment estimands come from a separate draw of X1 restricted to
    the band, so they are as precise as the full-population ones.
    """
    if model is None:
        model = build_model(config)
    rng = np.random.default_rng(derive_seed(config.seed, _KEY_ORACLE))
    sums = np.zeros(8)  # effect sum and count for: all, rct, compliers, rct & compliers
    for slot, band in ((0, None), (1, tuple(config.band))):
        done = 0
        while done < n_oracle:
            m = min(chunk, n_oracle - done)
            x, y0, e1, u = _draw_units(config, model.params, rng, m, band)
            pot = _potential_outcomes(config, model.params, x, y0, e1, u)
            comp = pot.complier_shift != 0
            for k, mask in ((slot, np.ones(m, bool)), (slot + 2, comp)):
                sums[2 * k] += pot.effect[mask].sum()
                sums[2 * k + 1] += mask.sum()
            done += m
    if sums[7] == 0:
        raise NoCompliers("oracle draw has no compliers")
    vals = [sums[2 * k] / sums[2 * k + 1] if sums[2 * k + 1] else math.nan for k in range(4)]
    return OracleEstimands(*(float(v) for v in vals))


# ------------------------------------------------------------------ Monte Carlo

ESTIMANDS = ("ate", "ate_rct", "late", "late_rct")
MC_ESTIMATORS = ("tsls", "tsls_pscore", "naive_ols", "naive_tsls")


@dataclass(frozen=True)
class McCell:
    estimator: str
    estimand: str
    delta: float | None
    target: float
    bias: float
    sd: float
    rmse: float
    coverage: float
    mean_n_used: float
    replications: int
    failures: int


@dataclass
class McSummary:
    cells: list[McCell]
    replications: int
    estimands: OracleEstimands
    estimates: dict = field(default_factory=dict)

    def cell(self, estimator: str, estimand: str = "late_rct", delta: float | None = None) -> McCell:
        for c in self.cells:
            if c.estimator == estimator and c.estimand == estimand and c.delta == delta:
                return c
        raise KeyError((estimator, estimand, delta))

    def to_csv(self) -> str:
        cols = ["estimator", "estimand", "delta", "target", "bias", "sd", "rmse", "coverage",
                "mean_n_used", "replications", "failures"]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for c in self.cells:
            row = [c.estimator, c.estimand, "" if c.delta is None else fmt_csv(c.delta)]
            row += [fmt_csv(getattr(c, k)) for k in cols[3:]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def to_table(self) -> str:
        """Panels by estimand; columns are estimators (and bandwidths); rows are metrics."""
        keys = []
        for c in self.cells:
            k = (c.estimator, c.delta)
            if k not in keys:
                keys.append(k)
        heads = [e if d is None else f"{e} d={d:g}" for e, d in keys]
        out = []
        for est in dict.fromkeys(c.estimand for c in self.cells):
            lookup = {(c.estimator, c.delta): c for c in self.cells if c.estimand == est}
            target = next(iter(lookup.values())).target
            rows = [[f"{est} = {target:.3f}", *heads]]
            for metric in ("bias", "sd", "rmse", "coverage"):
                rows.append([metric, *(f"{getattr(lookup[k], metric):.3f}" if k in lookup else ""
                                       for k in keys)])
            rows.append(["N used", *(f"{lookup[k].mean_n_used:.0f}" if k in lookup else ""
                                     for k in keys)])
            widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
            for r in rows:
                out.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                     for j, (c, w) in enumerate(zip(r, widths))).rstrip())
            out.append("")
        return "\n".join(out)


def _summarize(values: np.ndarray, ses: np.ndarray, target: float):
    err = values - target
    bias = float(err.mean())
    sd = float(values.std())
    rmse = float(math.sqrt(np.mean(err ** 2)))
    cover = float(np.mean(np.abs(err) <= 1.96 * ses))
    return bias, sd, rmse, cover


def replication_estimates(config: DgpConfig, model: DgpModel, replication: int,
                          deltas: Sequence[float], draws: int,
                          estimators: Sequence[str] = MC_ESTIMATORS,
                          threads: int | None = None) -> dict:
    """Run every estimator on one fresh sample.

    Returns ``{(estimator, delta): EstimateReport | ApsIvError}``; delta is
    None for estimators that do not use the APS.
    """
    ds, pot, rule = generate_sample(config, replication, model)
    std, _ = standardize(ds)
    out: dict = {}
    for name in estimators:
        try:
            if name == "tsls":
                for delta in deltas:
                    seed = derive_seed(config.seed, _KEY_APS, replication, float(delta))
                    try:
                        aps = simulate_aps(std, rule, ApsConfig(delta, draws, seed), threads)
                        out[(name, float(delta))] = tsls_aps(std, aps)
                    except ApsIvError as exc:
                        out[(name, float(delta))] = exc
            elif name == "tsls_pscore":
                a = rule(ds.x_cont)
                out[(name, None)] = tsls_aps(ds, ApsResult.from_values(a))
            elif name == "naive_ols":
                out[(name, None)] = naive_ols(ds)
            elif name == "naive_tsls":
                out[(name, None)] = naive_tsls(ds)
            else:
                raise ConfigError(f"unknown Monte Carlo estimator {name!r}")
        except ApsIvError as exc:
            if isinstance(exc, ConfigError):
                raise
            out[(name, None)] = exc
    return out


def run_monte_carlo(config: DgpConfig, deltas: Sequence[float], draws: int = 400,
                    estimators: Sequence[str] = MC_ESTIMATORS, replications: int = 100,
                    estimands: OracleEstimands | None = None, oracle_n: int = 2_000_000,
                    threads: int | None = None, max_failure_rate: float = 0.10,
                    progress: Callable[[int], None] | None = None) -> McSummary:
    """Bias, SD, RMSE and 95% coverage of each estimator for each estimand.

    tau_pred and the DGP parameters are built once and shared by all
    replications.  Failed fits are excluded and counted; more than
    ``max_failure_rate`` failures in any cell raises TooManyFailures.
    """
    if replications < 2:
        raise ConfigError("need at least two replications")
    deltas = [float(d) for d in deltas]
    if "tsls" in estimators and (not deltas or any(not d > 0 for d in deltas)):
        raise ConfigError("deltas must be non-empty and positive")
    model = build_model(config)
    if estimands is None:
        estimands = population_estimands(config, model, oracle_n)
    n_threads = resolve_threads(threads)

    def one(r):
        # Replications own their seeds; inner APS runs stay single-threaded when
        # replications themselves run in parallel.
        res = replication_estimates(config, model, r, deltas, draws, estimators,
                                    1 if n_threads > 1 else threads)
        if progress is not None:
            progress(r)
        return res

    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            per_rep = list(pool.map(one, range(replications)))
    else:
        per_rep = [one(r) for r in range(replications)]
    collected: dict = {}
    for res in per_rep:
        for key, value in res.items():
            collected.setdefault(key, []).append(value)
    cells = []
    for (name, delta), results in collected.items():
        good = [x for x in results if isinstance(x, EstimateReport)]
        failures = len(results) - len(good)
        if failures > max_failure_rate * replications:
            kinds = sorted({type(x).__name__ for x in results if not isinstance(x, EstimateReport)})
            raise TooManyFailures(f"{name} (delta={delta}): {failures} of {replications} "
                                  f"replications failed ({', '.join(kinds)})")
        if len(good) < 2:
            continue
        b = np.array([g.beta1 for g in good])
        s = np.array([g.se_robust for g in good])
        n_used = float(np.mean([g.n_used for g in good]))
        for est in ESTIMANDS:
            target = estimands.get(est)
            bias, sd, rmse, cover = _summarize(b, s, target)
            cells.append(McCell(name, est, delta, target, bias, sd, rmse, cover, n_used,
                                len(good), failures))
    estimates = {k: [x.beta1 if isinstance(x, EstimateReport) else math.nan for x in v]
                 for k, v in collected.items()}
    return McSummary(cells, replications, estimands, estimates)


# ------------------------------------------------------------------ other DGPs

def constant_effect_sample(rule: DecisionRule, n: int, effect: float = 2.0, seed: int = 0,
                           noise: float = 1.0):
    """Perfect compliance (D = Z) with Z ~ Bernoulli(A(X)) and a constant effect.

    X is standard normal with ``rule.p_cont`` columns; Y(0) = sum(X) + noise.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, rule.p_cont))
    a = rule(x)
    z = (rng.random(n) < a).astype(float)
    y0 = x.sum(axis=1) + noise * rng.standard_normal(n)
    pot = PotentialOutcomes(y0 + effect, y0, np.ones(n), np.zeros(n))
    y, d = pot.realize(z)
    return Dataset(y=y, x_cont=x, d=d, z=z), pot


def balance_sample(rule: DecisionRule, n: int, seed: int = 0):
    """Data where covariate ``w`` depends on X but not on Z given X.

    ``w`` and Y(0) both load on X; Z is drawn from A(X).  Since Z is
    independent of ``w`` given X, the APS-controlled balance coefficient
    is asymptotically zero.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, rule.p_cont))
    a = rule(x)
    z = (rng.random(n) < a).astype(float)
    w = x[:, 0] + rng.standard_normal(n)
    y = x.sum(axis=1) + z + rng.standard_normal(n)
    return Dataset(y=y, x_cont=x, d=z, z=z, extra={"w": w})


def cares_sample(n: int = 4_000, seed: int = 0, effect_per_million: float = 0.5):
    """Synthetic hospitals scored by the safety-net rule.

    Covariates are DPP share, uncompensated care per bed and profit margin;
    the treatment is funding in $ millions and the outcome responds linearly
    to funding plus a smooth function of the covariates.  Returns the dataset
    (recommendation = eligibility) and the raw funding vector.
    """
    rng = np.random.default_rng(seed)
    dpp = rng.beta(4, 14, n)
    ucc = np.exp(rng.normal(9.6, 0.8, n))
    margin = rng.normal(0.02, 0.06, n)
    beds = np.maximum(5, np.round(np.exp(rng.normal(4.6, 0.9, n))))
    eligible = cares_eligible(dpp, ucc, margin)
    funding = cares_funding(dpp, beds, eligible)
    money = funding / 1e6
    x = np.column_stack([dpp, ucc, margin])
    size = np.log(beds)
    y = (2.0 * dpp + 0.3 * np.log(ucc) - 3.0 * margin + 0.2 * size
         + effect_per_million * money + rng.standard_normal(n))
    ds = Dataset(y=y, x_cont=x, d=money, z=eligible, continuous_treatment=True,
                 cont_names=("dpp", "ucc_per_bed", "margin"),
                 extra={"log_beds": size, "beds": beds})
    return ds, funding
