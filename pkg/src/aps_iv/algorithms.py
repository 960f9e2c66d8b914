"""Decision rules A(x): recommendation probabilities as functions of covariates.

A :class:`DecisionRule` wraps a vectorized function of ``(x_cont, x_disc)``
arrays.  Builtin constructors also attach analytic limiting APS values (and,
for half-space rules, the analytic fixed-bandwidth APS) used as test oracles,
plus a JSON-friendly descriptor so rules can be written to and read from
config files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .aps import half_space_aps
from .errors import (ConfigError, DimensionMismatch, DuplicateCentroids,
                     NonpositiveBeds, NonpositiveVariance)

RuleFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

_EVAL_TOL = 1e-12


def _as_2d(x, p: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if p == 0 and arr.size == 0:
            return arr.reshape(1, 0)
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != p:
        raise DimensionMismatch(f"{name}: expected {p} columns, got shape {np.shape(x)}")
    return arr


@dataclass(frozen=True)
class DecisionRule:
    """Known recommendation probability A(x) = Pr(Z = 1 | X = x).

    ``fn`` maps a (k, p_cont) float array and a (k, p_disc) integer array to k
    probabilities.  ``aps_limit`` and ``aps_fixed`` are optional analytic
    oracles with the same calling convention (``aps_fixed`` takes delta as a
    third argument).  ``indicator`` marks deterministic rules taking only the
    values 0 and 1.  ``bounded`` marks rules whose outputs lie in [0, 1] by
    construction; they skip the per-call range check.
    """

    fn: RuleFn
    p_cont: int
    p_disc: int = 0
    kind: str = "custom"
    params: Mapping[str, Any] = field(default_factory=dict)
    aps_limit: RuleFn | None = None
    aps_fixed: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    indicator: bool = False
    bounded: bool = False

    def _inputs(self, x_cont, x_disc):
        xc = _as_2d(x_cont, self.p_cont, "continuous covariates")
        if x_disc is None:
            if self.p_disc:
                raise DimensionMismatch(f"rule needs {self.p_disc} discrete covariates")
            xd = np.zeros((len(xc), 0), dtype=np.int64)
        else:
            xd = _as_2d(x_disc, self.p_disc, "discrete covariates")
            if len(xd) != len(xc):
                raise DimensionMismatch("continuous and discrete covariates differ in rows")
        return xc, xd

    def __call__(self, x_cont, x_disc=None) -> np.ndarray:
        xc, xd = self._inputs(x_cont, x_disc)
        out = np.asarray(self.fn(xc, xd), dtype=float).reshape(len(xc))
        if self.bounded or not len(out):
            return out
        lo, hi = out.min(), out.max()
        # min/max propagate NaN, so the negated test also rejects it.
        if not (lo >= -_EVAL_TOL and hi <= 1 + _EVAL_TOL):
            raise ConfigError(f"rule {self.kind!r} returned values outside [0, 1]")
        if lo < 0 or hi > 1:
            out = np.clip(out, 0.0, 1.0)
        return out

    def evaluate(self, x_cont, x_disc=None) -> float:
        """A(x) at a single covariate point."""
        return float(self(np.atleast_1d(x_cont), None if x_disc is None else np.atleast_1d(x_disc))[0])

    def analytic_aps_limit(self, x_cont, x_disc=None):
        if self.aps_limit is None:
            raise NotImplementedError(f"rule {self.kind!r} has no analytic APS limit")
        xc, xd = self._inputs(x_cont, x_disc)
        out = np.asarray(self.aps_limit(xc, xd), dtype=float)
        return float(out[0]) if np.ndim(x_cont) == 1 else out

    def analytic_aps_fixed(self, x_cont, delta: float, x_disc=None):
        if self.aps_fixed is None:
            raise NotImplementedError(f"rule {self.kind!r} has no analytic fixed-bandwidth APS")
        xc, xd = self._inputs(x_cont, x_disc)
        out = np.asarray(self.aps_fixed(xc, xd, float(delta)), dtype=float)
        return float(out[0]) if np.ndim(x_cont) == 1 else out

    @property
    def descriptor(self) -> dict:
        if self.kind == "custom":
            raise ConfigError("custom rules have no serializable descriptor")
        return {"kind": self.kind, **_jsonable(self.params)}


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, DecisionRule):
        return obj.descriptor
    if isinstance(obj, Quadratic):
        return obj.descriptor
    return obj


def _two_level(ok: np.ndarray, q_true: float, q_false: float) -> np.ndarray:
    """Exactly ``np.where(ok, q_true, q_false)``, several times faster on large arrays."""
    out = ok.astype(float)
    gap = q_true - q_false
    if gap + q_false == q_true:
        # ok * gap + q_false reproduces both levels bit for bit.
        if gap != 1.0:
            out *= gap
        if q_false != 0.0:
            out += q_false
        return out
    out *= q_true
    rest = (~ok).astype(float)
    rest *= q_false
    out += rest
    return out


def eval_rule(rule: DecisionRule, x_cont, x_disc=None) -> float:
    return rule.evaluate(x_cont, x_disc)


# ---------------------------------------------------------------- simple rules

def constant_rule(value: float, p_cont: int = 1) -> DecisionRule:
    if not 0 <= value <= 1:
        raise ConfigError("constant probability must lie in [0, 1]")
    value = float(value)

    def fn(xc, xd):
        return np.full(len(xc), value)

    def fixed(xc, xd, delta):
        return np.full(len(xc), value)

    return DecisionRule(fn, p_cont, kind="constant", params={"value": value, "p_cont": p_cont},
                        aps_limit=fn, aps_fixed=fixed, indicator=value in (0.0, 1.0), bounded=True)


@dataclass(frozen=True)
class Condition:
    """Half-space ``weights . x + offset >= 0`` (or ``<= 0``)."""

    weights: tuple[float, ...]
    offset: float = 0.0
    direction: str = ">="

    def __post_init__(self):
        if self.direction not in (">=", "<="):
            raise ConfigError(f"direction must be '>=' or '<=', got {self.direction!r}")
        w = tuple(float(v) for v in self.weights)
        if not any(w):
            raise ConfigError("condition weights must not all be zero")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, xc: np.ndarray) -> np.ndarray:
        """Euclidean distance to the boundary, positive where the condition holds."""
        w = np.asarray(self.weights)
        s = (xc @ w + self.offset) / np.linalg.norm(w)
        return s if self.direction == ">=" else -s

    def holds(self, xc: np.ndarray) -> np.ndarray:
        w = np.asarray(self.weights)
        if len(w) == 1:
            lin = xc[:, 0] if w[0] == 1.0 else xc[:, 0] * w[0]
        else:
            lin = xc @ w
        return lin >= -self.offset if self.direction == ">=" else lin <= -self.offset

    @property
    def descriptor(self) -> dict:
        return {"weights": list(self.weights), "offset": self.offset, "direction": self.direction}


def affine_rule(conditions: Sequence[Condition | Mapping], combinator: str = "AND",
                inside_prob: float = 1.0, outside_prob: float = 0.0,
                kind: str = "affine_and", extra_params: Mapping | None = None) -> DecisionRule:
    """``inside_prob`` where the conditions hold (all for AND, any for OR), else ``outside_prob``.

    The analytic APS limit covers interior points and points on exactly one
    pivotal boundary; points where several boundaries meet yield NaN.  The
    analytic fixed-bandwidth APS is provided for single-condition rules.
    """
    conds = [c if isinstance(c, Condition) else Condition(**c) for c in conditions]
    if not conds:
        raise ConfigError("affine rule needs at least one condition")
    p = len(conds[0].weights)
    if any(len(c.weights) != p for c in conds):
        raise DimensionMismatch("conditions have different dimensions")
    combinator = combinator.upper()
    if combinator not in ("AND", "OR"):
        raise ConfigError(f"combinator must be AND or OR, got {combinator!r}")
    q_in, q_out = float(inside_prob), float(outside_prob)
    for q in (q_in, q_out):
        if not 0 <= q <= 1:
            raise ConfigError("probabilities must lie in [0, 1]")
    reduce = np.logical_and.reduce if combinator == "AND" else np.logical_or.reduce

    def fn(xc, xd):
        ok = conds[0].holds(xc) if len(conds) == 1 else reduce([c.holds(xc) for c in conds])
        return _two_level(ok, q_in, q_out)

    def limit(xc, xd):
        dist = np.column_stack([c.signed_distance(xc) for c in conds])
        scale = 1e-12 * np.maximum(1.0, np.abs(xc).max(axis=1, initial=0.0))
        on = np.abs(dist) <= scale[:, None]
        strict = dist > 0
        out = fn(xc, xd)
        n_on = on.sum(axis=1)
        for i in np.flatnonzero(n_on == 1):
            k = int(np.flatnonzero(on[i])[0])
            others = np.delete(strict[i], k)
            pivotal = others.all() if combinator == "AND" else not others.any()
            out[i] = 0.5 * (q_in + q_out) if pivotal else (q_out if combinator == "AND" else q_in)
        out[n_on > 1] = np.nan
        return out

    fixed = None
    if len(conds) == 1:
        cond = conds[0]

        def fixed(xc, xd, delta):
            k = half_space_aps(cond.signed_distance(xc), delta, p)
            return q_out + (q_in - q_out) * k

    params = {"conditions": [c.descriptor for c in conds], "combinator": combinator,
              "inside_prob": q_in, "outside_prob": q_out}
    if extra_params:
        params = {**extra_params, **params} if kind != "cares" else dict(extra_params)
    return DecisionRule(fn, p, kind=kind, params=params, aps_limit=limit, aps_fixed=fixed,
                        indicator={q_in, q_out} <= {0.0, 1.0}, bounded=True)


def threshold_rule(cutoff: float = 0.0, index: int = 0, p_cont: int = 1, direction: str = ">=",
                   above: float = 1.0, below: float = 0.0) -> DecisionRule:
    """Single-coordinate threshold: ``above`` where x[index] >= cutoff."""
    if not 0 <= index < p_cont:
        raise DimensionMismatch("threshold index out of range")
    w = [0.0] * p_cont
    w[index] = 1.0
    rule = affine_rule([Condition(w, -float(cutoff), direction)], "AND", above, below)
    params = {"cutoff": float(cutoff), "index": index, "p_cont": p_cont, "direction": direction,
              "above": float(above), "below": float(below)}
    return DecisionRule(rule.fn, p_cont, kind="threshold", params=params, aps_limit=rule.aps_limit,
                        aps_fixed=rule.aps_fixed, indicator=rule.indicator, bounded=True)


def epsilon_band_rule(index: int, lower: float, upper: float, outside: DecisionRule,
                      inside_prob: float = 0.5) -> DecisionRule:
    """``inside_prob`` when lower <= x[index] <= upper, otherwise ``outside``.

    Mirrors a randomized experiment run on a band of one covariate while a
    deterministic algorithm handles everybody else.
    """
    if not lower < upper:
        raise ConfigError("band needs lower < upper")
    if not 0 <= inside_prob <= 1:
        raise ConfigError("inside_prob must lie in [0, 1]")
    if not 0 <= index < outside.p_cont:
        raise DimensionMismatch("band index out of range")
    q = float(inside_prob)

    def in_band(xc):
        return (xc[:, index] >= lower) & (xc[:, index] <= upper)

    def fn(xc, xd):
        out = np.full(len(xc), q)
        mask = ~in_band(xc)
        if mask.any():
            out[mask] = outside(xc[mask], xd[mask])
        return out

    limit = None
    if outside.aps_limit is not None:
        def limit(xc, xd):
            out = fn(xc, xd)
            mask = ~in_band(xc)
            if mask.any():
                out[mask] = outside.aps_limit(xc[mask], xd[mask])
            edge = (xc[:, index] == lower) | (xc[:, index] == upper)
            if edge.any():
                out[edge] = 0.5 * (q + outside.aps_limit(xc[edge], xd[edge]))
            return out

    params = {"index": index, "lower": float(lower), "upper": float(upper), "inside_prob": q,
              "outside": outside}
    return DecisionRule(fn, outside.p_cont, outside.p_disc, kind="epsilon_band", params=params,
                        aps_limit=limit, indicator=outside.indicator and q in (0.0, 1.0),
                        bounded=outside.bounded)


def quantile_band_rule(x_column, index: int, lower_q: float, upper_q: float,
                       outside: DecisionRule, inside_prob: float = 0.5) -> DecisionRule:
    """Band rule whose edges are empirical quantiles of ``x_column``, frozen now."""
    if not 0 <= lower_q < upper_q <= 1:
        raise ConfigError("quantile band needs 0 <= lower_q < upper_q <= 1")
    lo, hi = np.quantile(np.asarray(x_column, dtype=float), [lower_q, upper_q])
    return epsilon_band_rule(index, float(lo), float(hi), outside, inside_prob)


def by_group_rule(rules: Mapping[int, DecisionRule], index: int = 0, p_disc: int = 1) -> DecisionRule:
    """Different rule per value of discrete covariate ``index``."""
    rules = {int(k): v for k, v in rules.items()}
    if not rules:
        raise ConfigError("by_group rule needs at least one group")
    p = {r.p_cont for r in rules.values()}
    if len(p) != 1:
        raise DimensionMismatch("group rules differ in continuous dimension")
    p_cont = p.pop()

    def dispatch(attr):
        def f(xc, xd, *extra):
            out = np.full(len(xc), np.nan)
            codes = xd[:, index]
            for code in np.unique(codes):
                sub = rules.get(int(code))
                if sub is None:
                    raise ConfigError(f"no rule for discrete code {code}")
                m = codes == code
                fun = sub.fn if attr == "fn" else getattr(sub, attr)
                if fun is None:
                    raise NotImplementedError(f"group rule {sub.kind!r} lacks {attr}")
                out[m] = fun(xc[m], np.zeros((int(m.sum()), sub.p_disc), dtype=np.int64), *extra)
            return out
        return f

    has = lambda a: all(getattr(r, a) is not None for r in rules.values())  # noqa: E731
    return DecisionRule(dispatch("fn"), p_cont, p_disc, kind="by_group",
                        params={"index": index, "p_disc": p_disc,
                                "rules": {str(k): v for k, v in rules.items()}},
                        aps_limit=dispatch("aps_limit") if has("aps_limit") else None,
                        aps_fixed=dispatch("aps_fixed") if has("aps_fixed") else None,
                        indicator=all(r.indicator for r in rules.values()),
                        bounded=all(r.bounded for r in rules.values()))


# ---------------------------------------------------------------- bandit rules

@dataclass(frozen=True)
class Quadratic:
    """f(x) = const + linear . x + x' quadratic x, vectorized over rows of x."""

    const: float = 0.0
    linear: tuple[float, ...] | None = None
    quadratic: tuple[tuple[float, ...], ...] | None = None

    def __call__(self, xc: np.ndarray) -> np.ndarray:
        xc = np.atleast_2d(xc)
        out = np.full(len(xc), float(self.const))
        if self.linear is not None:
            out = out + xc @ np.asarray(self.linear, dtype=float)
        if self.quadratic is not None:
            q = np.asarray(self.quadratic, dtype=float)
            out = out + np.einsum("ij,jk,ik->i", xc, q, xc)
        return out

    @property
    def is_affine(self) -> bool:
        return self.quadratic is None or not np.any(self.quadratic)

    @property
    def gradient(self) -> np.ndarray:
        return np.asarray(self.linear if self.linear is not None else [], dtype=float)

    @property
    def descriptor(self) -> dict:
        d: dict[str, Any] = {"const": float(self.const)}
        if self.linear is not None:
            d["linear"] = [float(v) for v in self.linear]
        if self.quadratic is not None:
            d["quadratic"] = [[float(v) for v in row] for row in self.quadratic]
        return d

    @classmethod
    def coerce(cls, f) -> "Quadratic | Callable":
        if isinstance(f, (Quadratic,)) or callable(f):
            return f
        if isinstance(f, (int, float)):
            return cls(float(f))
        if isinstance(f, Mapping):
            lin = f.get("linear")
            quad = f.get("quadratic")
            return cls(float(f.get("const", 0.0)),
                       None if lin is None else tuple(float(v) for v in lin),
                       None if quad is None else tuple(tuple(float(v) for v in r) for r in quad))
        raise ConfigError(f"cannot interpret {f!r} as a function of x")


def _infer_dim(fs, p_cont):
    if p_cont is not None:
        return int(p_cont)
    for f in fs:
        if isinstance(f, Quadratic) and f.linear is not None:
            return len(f.linear)
        if isinstance(f, Quadratic) and f.quadratic is not None:
            return len(f.quadratic)
    raise ConfigError("cannot infer covariate dimension; pass p_cont")


def _fn_params(names, fs):
    if all(isinstance(f, Quadratic) for f in fs):
        return dict(zip(names, fs))
    return None


def thompson_gaussian_rule(mu0, mu1, sigma0, sigma1, p_cont: int | None = None) -> DecisionRule:
    """Two-arm Thompson sampling with independent Gaussian posteriors.

    A(x) = 1 - Phi((mu0 - mu1) / sqrt(sigma0^2 + sigma1^2)); the rule is
    continuous so its APS equals A everywhere.
    """
    fs = [Quadratic.coerce(f) for f in (mu0, mu1, sigma0, sigma1)]
    p = _infer_dim(fs, p_cont)
    m0, m1, s0, s1 = fs

    def fn(xc, xd):
        a, b = np.asarray(s0(xc), float), np.asarray(s1(xc), float)
        if np.any(a <= 0) or np.any(b <= 0):
            raise NonpositiveVariance("posterior standard deviations must be positive")
        return ndtr((np.asarray(m1(xc)) - np.asarray(m0(xc))) / np.sqrt(a * a + b * b))

    params = _fn_params(("mu0", "mu1", "sigma0", "sigma1"), fs)
    return DecisionRule(fn, p, kind="thompson" if params else "custom",
                        params={**(params or {}), "p_cont": p}, aps_limit=fn)


def ucb_rule(mu0, mu1, sigma0, sigma1, alpha: float, p_cont: int | None = None) -> DecisionRule:
    """Upper-confidence-bound arm choice: 1{mu1 + alpha sigma1 > mu0 + alpha sigma0}.

    The analytic APS limit is 0.5 on the tie set; it is only valid where the
    gradient of the score gap is nonzero, which is not checked.
    """
    if alpha < 0:
        raise ConfigError("alpha must be non-negative")
    fs = [Quadratic.coerce(f) for f in (mu0, mu1, sigma0, sigma1)]
    p = _infer_dim(fs, p_cont)
    m0, m1, s0, s1 = fs
    alpha = float(alpha)

    def gap(xc):
        return (np.asarray(m1(xc)) + alpha * np.asarray(s1(xc))
                - np.asarray(m0(xc)) - alpha * np.asarray(s0(xc)))

    def fn(xc, xd):
        return (gap(xc) > 0).astype(float)

    def limit(xc, xd):
        g = gap(xc)
        return np.where(g > 0, 1.0, np.where(g < 0, 0.0, 0.5))

    fixed = None
    if all(isinstance(f, Quadratic) and f.is_affine for f in fs):
        def grad(f):
            return f.gradient if f.linear is not None else np.zeros(p)
        w = grad(m1) + alpha * grad(s1) - grad(m0) - alpha * grad(s0)
        if np.any(w):
            norm = np.linalg.norm(w)

            def fixed(xc, xd, delta):
                return half_space_aps(gap(xc) / norm, delta, p)

    params = _fn_params(("mu0", "mu1", "sigma0", "sigma1"), fs)
    return DecisionRule(fn, p, kind="ucb" if params else "custom",
                        params={**(params or {}), "alpha": alpha, "p_cont": p},
                        aps_limit=limit, aps_fixed=fixed, indicator=True, bounded=True)


# ------------------------------------------------------------ learned partitions

def tree_rule_quadrant(q1: float, q2: float) -> DecisionRule:
    """Two-split tree in the plane: q2 on {x1 > 0, x2 > 0}, q1 elsewhere."""
    for q in (q1, q2):
        if not 0 <= q <= 1:
            raise ConfigError("probabilities must lie in [0, 1]")
    q1, q2 = float(q1), float(q2)

    def fn(xc, xd):
        return _two_level((xc[:, 0] > 0) & (xc[:, 1] > 0), q2, q1)

    def limit(xc, xd):
        out = fn(xc, xd)
        a, b = xc[:, 0], xc[:, 1]
        out[(a == 0) & (b == 0)] = 0.75 * q1 + 0.25 * q2
        out[((a == 0) & (b > 0)) | ((a > 0) & (b == 0))] = 0.5 * (q1 + q2)
        return out

    def fixed(xc, xd, delta):
        # Only the scale-free apex is closed form: a quarter of every ball.
        if np.any(xc != 0):
            raise NotImplementedError("closed form only at the origin")
        return np.full(len(xc), 0.75 * q1 + 0.25 * q2)

    return DecisionRule(fn, 2, kind="quadrant_tree", params={"q1": q1, "q2": q2},
                        aps_limit=limit, aps_fixed=fixed, indicator={q1, q2} <= {0.0, 1.0},
                        bounded=True)


def kmeans_target_rule(centroids, targets) -> DecisionRule:
    """1 if the nearest centroid is a target cluster.

    Ties at a sample point go to the lowest centroid index.  The APS limit is
    0.5 on boundaries between exactly two cells of different status; points
    equidistant to three or more centroids straddling the target boundary get
    NaN.
    """
    c = np.asarray(centroids, dtype=float)
    if c.ndim != 2 or len(c) < 2:
        raise ConfigError("need at least two centroids")
    if len(np.unique(c, axis=0)) != len(c):
        raise DuplicateCentroids("centroids must be distinct")
    t = sorted({int(k) for k in targets})
    if any(not 0 <= k < len(c) for k in t):
        raise ConfigError("target index out of range")
    is_target = np.zeros(len(c), dtype=bool)
    is_target[t] = True

    def dists(xc):
        return ((xc[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)

    def fn(xc, xd):
        return is_target[np.argmin(dists(xc), axis=1)].astype(float)

    def limit(xc, xd):
        dd = dists(xc)
        dmin = dd.min(axis=1, keepdims=True)
        near = dd <= dmin + 1e-12 * np.maximum(1.0, dmin)
        n_t = (near & is_target).sum(axis=1)
        n_all = near.sum(axis=1)
        out = np.where(n_t == n_all, 1.0, np.where(n_t == 0, 0.0, np.nan))
        out[(n_all == 2) & (n_t == 1)] = 0.5
        return out

    return DecisionRule(fn, c.shape[1], kind="kmeans",
                        params={"centroids": c.tolist(), "targets": t},
                        aps_limit=limit, indicator=True, bounded=True)


# ------------------------------------------------------------- CARES-style rule

CARES_DPP_MIN = 0.202
CARES_UCC_PER_BED_MIN = 25_000.0
CARES_MARGIN_MAX = 0.03
CARES_POOL = 10e9
CARES_FLOOR = 5e6
CARES_CAP = 50e6


def cares_rule(dpp_index: int = 0, ucc_index: int = 1, margin_index: int = 2, p_cont: int = 3,
               dpp_min: float = CARES_DPP_MIN, ucc_min: float = CARES_UCC_PER_BED_MIN,
               margin_max: float = CARES_MARGIN_MAX) -> DecisionRule:
    """Safety-net eligibility: DPP >= 20.2%, UCC/bed >= $25,000, margin <= 3%."""
    idx = (dpp_index, ucc_index, margin_index)
    if len(set(idx)) != 3 or any(not 0 <= i < p_cont for i in idx):
        raise DimensionMismatch("CARES rule needs three distinct covariate indices")

    def unit(i):
        w = [0.0] * p_cont
        w[i] = 1.0
        return w

    conds = [Condition(unit(dpp_index), -dpp_min, ">="),
             Condition(unit(ucc_index), -ucc_min, ">="),
             Condition(unit(margin_index), -margin_max, "<=")]
    params = {"dpp_index": dpp_index, "ucc_index": ucc_index, "margin_index": margin_index,
              "p_cont": p_cont, "dpp_min": dpp_min, "ucc_min": ucc_min, "margin_max": margin_max}
    return affine_rule(conds, "AND", 1.0, 0.0, kind="cares", extra_params=params)


def cares_eligible(dpp, ucc_per_bed, margin) -> np.ndarray:
    dpp, ucc, margin = (np.asarray(a, dtype=float) for a in (dpp, ucc_per_bed, margin))
    return ((dpp >= CARES_DPP_MIN) & (ucc >= CARES_UCC_PER_BED_MIN)
            & (margin <= CARES_MARGIN_MAX)).astype(int)


def cares_rule_and_funding(dpp: float, ucc_per_bed: float, margin: float, beds: float,
                           total_score: float, total_pool: float = CARES_POOL,
                           floor: float = CARES_FLOOR, cap: float = CARES_CAP) -> tuple[int, float]:
    """Eligibility and funding for one hospital.

    ``total_score`` is the summed facility score (DPP x beds) over all
    eligible hospitals.  Eligible hospitals receive their score share of the
    pool, clamped to [floor, cap]; ineligible ones receive nothing.
    """
    if not beds > 0:
        raise NonpositiveBeds("beds must be positive")
    if not (total_pool > 0 and floor > 0 and cap > 0 and total_score > 0):
        raise ConfigError("pool, floor, cap and total score must be positive")
    if floor > cap:
        raise ConfigError("floor exceeds cap")
    eligible = int(cares_eligible(dpp, ucc_per_bed, margin))
    if not eligible:
        return 0, 0.0
    share = dpp * beds / total_score
    return 1, float(min(max(share * total_pool, floor), cap))


def cares_funding(dpp, beds, eligible, total_pool: float = CARES_POOL, floor: float = CARES_FLOOR,
                  cap: float = CARES_CAP) -> np.ndarray:
    """Vectorized funding where the score total runs over eligible hospitals."""
    dpp, beds = np.asarray(dpp, dtype=float), np.asarray(beds, dtype=float)
    eligible = np.asarray(eligible).astype(bool)
    if np.any(beds <= 0):
        raise NonpositiveBeds("beds must be positive")
    score = dpp * beds
    total = score[eligible].sum()
    if not eligible.any():
        return np.zeros(len(dpp))
    amount = np.clip(score / total * total_pool, floor, cap)
    return np.where(eligible, amount, 0.0)


# ------------------------------------------------------------------ descriptors

RULE_KINDS = ("constant", "threshold", "affine_and", "epsilon_band", "thompson", "ucb",
              "kmeans", "quadrant_tree", "cares", "by_group")


def rule_from_descriptor(desc: Mapping[str, Any]) -> DecisionRule:
    """Build a rule from ``{"kind": ..., **params}`` as produced by ``rule.descriptor``."""
    if not isinstance(desc, Mapping) or "kind" not in desc:
        raise ConfigError("rule descriptor must be a mapping with a 'kind' key")
    kind = desc["kind"]
    p = {k: v for k, v in desc.items() if k != "kind"}
    try:
        if kind == "constant":
            return constant_rule(p["value"], p.get("p_cont", 1))
        if kind == "threshold":
            return threshold_rule(**p)
        if kind == "affine_and":
            return affine_rule(p["conditions"], p.get("combinator", "AND"),
                               p.get("inside_prob", 1.0), p.get("outside_prob", 0.0))
        if kind == "epsilon_band":
            return epsilon_band_rule(p["index"], p["lower"], p["upper"],
                                     rule_from_descriptor(p["outside"]), p.get("inside_prob", 0.5))
        if kind == "thompson":
            return thompson_gaussian_rule(p["mu0"], p["mu1"], p["sigma0"], p["sigma1"], p.get("p_cont"))
        if kind == "ucb":
            return ucb_rule(p["mu0"], p["mu1"], p["sigma0"], p["sigma1"], p["alpha"], p.get("p_cont"))
        if kind == "kmeans":
            return kmeans_target_rule(p["centroids"], p["targets"])
        if kind == "quadrant_tree":
            return tree_rule_quadrant(p["q1"], p["q2"])
        if kind == "cares":
            return cares_rule(**p)
        if kind == "by_group":
            return by_group_rule({int(k): rule_from_descriptor(v) for k, v in p["rules"].items()},
                                 p.get("index", 0), p.get("p_disc", 1))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad parameters for rule kind {kind!r}: {exc}") from None
    raise ConfigError(f"unknown rule kind {kind!r}; expected one of {', '.join(RULE_KINDS)}")
