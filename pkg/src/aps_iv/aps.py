"""Simulated fixed-bandwidth approximate propensity scores.

For every observation the recommendation probability is averaged over S
uniform draws from the delta-ball around its continuous covariates, holding
discrete covariates fixed.  Observation ``i`` always consumes stream ``i`` of
the configured seed, so the result does not depend on chunking or thread
count.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import STREAM_STRIDE, Dataset, base_bit_generator
from .errors import ConfigError, DimensionMismatch, DomainError

THREADS_ENV = "APS_IV_THREADS"

# Upper bound on floats materialized per chunk of observations.
_CHUNK_FLOATS = 262_144


class UnstandardizedCovariatesWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ApsConfig:
    delta: float
    draws: int
    seed: int = 0

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if int(self.draws) != self.draws or self.draws < 1:
            raise ConfigError(f"draws must be a positive integer, got {self.draws}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")
        object.__setattr__(self, "draws", int(self.draws))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "delta", float(self.delta))


@dataclass(frozen=True)
class ApsResult:
    values: np.ndarray
    nondegenerate: np.ndarray
    config: ApsConfig | None

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def n_nondegenerate(self) -> int:
        return int(self.nondegenerate.sum())

    @classmethod
    def from_values(cls, values, config: ApsConfig | None = None) -> "ApsResult":
        """Wrap externally computed scores (e.g. exact propensities)."""
        values = np.array(values, dtype=float)
        if np.any((values < 0) | (values > 1)) or not np.all(np.isfinite(values)):
            raise ConfigError("APS values must lie in [0, 1]")
        nondeg = (values > 0) & (values < 1)
        values.setflags(write=False)
        nondeg.setflags(write=False)
        return cls(values, nondeg, config)


def default_draws(n: int) -> int:
    """max(1000, ceil(n**0.6)): grows faster than sqrt(n)."""
    return max(1000, math.ceil(n ** 0.6))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 0:
        raise ConfigError("thread count must be >= 0")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


_HALF_ULP = 2.0 ** -53


def _interval_from_uniform(u: np.ndarray) -> np.ndarray:
    # [0, 1) -> open interval (-1, 1), in place.
    u *= 2.0
    u += _HALF_ULP - 1.0
    return u


def _unit_ball(stream: np.random.Generator, size: int, p: int) -> np.ndarray:
    # p == 1: the ball is an interval, sample it directly.
    if p == 1:
        return _interval_from_uniform(stream.random(size)).reshape(size, 1)
    # Direction from p normals; radius U**(1/p) with U = Phi(extra normal) so a
    # longer run of draws extends a shorter one.
    g = stream.standard_normal((size, p + 1))
    direction = g[:, :p]
    direction /= np.sqrt(np.einsum("ij,ij->i", direction, direction))[:, None]
    radius = np.minimum(ndtr(g[:, p]) ** (1.0 / p), 1.0 - _HALF_ULP)
    return direction * radius[:, None]


def sample_uniform_ball(center, delta: float, stream: np.random.Generator, size: int | None = None):
    """Uniform draw(s) from the open ball of radius ``delta`` around ``center``.

    Returns a vector of length p when ``size`` is None, else a (size, p) array.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.ndim != 1 or center.size < 1:
        raise DimensionMismatch("center must be a non-empty vector")
    if not delta > 0:
        raise ConfigError("delta must be positive")
    m = 1 if size is None else int(size)
    pts = center + delta * _unit_ball(stream, m, center.size)
    return pts[0] if size is None else pts


def _looks_standardized(x: np.ndarray) -> bool:
    if len(x) < 2:
        return True
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    ok = (np.abs(mean) < 0.05) & (np.abs(var - 1) < 0.05) | (var == 0)
    return bool(ok.all())


def simulate_aps(dataset: Dataset, rule, config: ApsConfig, threads: int | None = None) -> ApsResult:
    """Simulated fixed-bandwidth APS for every row of ``dataset``.

    If ``dataset`` carries a standardization map, perturbations happen in
    standardized coordinates and each draw is mapped back to original units
    before ``rule`` is evaluated.  ``threads`` defaults to the
    ``APS_IV_THREADS`` environment variable (0 = all cores).
    """
    if rule.p_cont != dataset.p_cont or rule.p_disc != dataset.p_disc:
        raise DimensionMismatch(
            f"rule expects ({rule.p_cont} continuous, {rule.p_disc} discrete) covariates, "
            f"dataset has ({dataset.p_cont}, {dataset.p_disc})")
    if dataset.standardization is None and not _looks_standardized(dataset.x_cont):
        warnings.warn("continuous covariates do not look standardized; a common delta "
                      "may be inappropriate", UnstandardizedCovariatesWarning, stacklevel=2)
    n, p, S = dataset.n, dataset.p_cont, config.draws
    x = dataset.x_cont
    xd = dataset.x_disc
    smap = dataset.standardization
    chunk = max(1, _CHUNK_FLOATS // (S * (p + 1)))
    bounds = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    out = np.empty(n)

    def work(lo_hi):
        lo, hi = lo_hi
        m = hi - lo
        bg = base_bit_generator(config.seed)
        gen = np.random.Generator(bg)
        if p == 1:
            pts = np.empty((m, S))
            bg.advance(lo * STREAM_STRIDE)
            for j in range(m):
                # Each double takes one 64-bit output, so a relative step
                # lands exactly on the next row's stream.
                if j:
                    bg.advance(STREAM_STRIDE - S)
                gen.random(out=pts[j])
            # x + delta * (2u + 2^-53 - 1), folded into one scale and one shift.
            pts *= 2.0 * config.delta
            pts += x[lo:hi] + config.delta * (_HALF_ULP - 1.0)
        else:
            pts = np.empty((m, S, p))
            start = bg.state
            for j in range(m):
                bg.state = start
                bg.advance((lo + j) * STREAM_STRIDE)
                pts[j] = _unit_ball(gen, S, p)
            pts *= config.delta
            pts += x[lo:hi, None, :]
        flat = pts.reshape(m * S, p)
        if smap is not None:
            flat = smap.invert(flat)
        if xd.shape[1]:
            disc = np.repeat(xd[lo:hi], S, axis=0)
        else:
            disc = np.empty((m * S, 0), dtype=np.int64)
        vals = np.asarray(rule(flat, disc), dtype=float).reshape(m, S)
        out[lo:hi] = vals.mean(axis=1)

    workers = min(resolve_threads(threads), len(bounds))
    if workers <= 1:
        for b in bounds:
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, bounds))
    return ApsResult.from_values(np.clip(out, 0.0, 1.0), config)


def analytic_aps_univariate_threshold(x, c: float, delta: float):
    """Fixed-bandwidth APS of the rule 1{x >= c} in one dimension."""
    if not delta > 0:
        raise ConfigError("delta must be positive")
    v = (np.asarray(x, dtype=float) - c) / (2.0 * delta) + 0.5
    v = np.clip(v, 0.0, 1.0)
    return float(v) if v.ndim == 0 else v


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10_000) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise DomainError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _cap(v: float, p: int) -> float:
    tail = 0.5 * betainc_regularized((p + 1) / 2.0, 0.5, 1.0 - v * v)
    return 1.0 - tail if v >= 0 else tail


def cap_fraction(v, p: int):
    """Share of the unit p-ball lying on the far side of a hyperplane.

    ``v`` in (-1, 1) is the signed distance of the ball's center from the
    hyperplane, positive when the center lies inside the half-space.  This is
    the fixed-bandwidth APS of a half-space rule at signed distance v*delta.
    """
    if int(p) != p or p < 1:
        raise DomainError(f"dimension must be a positive integer, got {p}")
    arr = np.asarray(v, dtype=float)
    if np.any(~(np.abs(arr) < 1)):
        raise DomainError("cap_fraction needs |v| < 1")
    if arr.ndim == 0:
        return _cap(float(arr), int(p))
    return np.array([_cap(float(t), int(p)) for t in arr.ravel()]).reshape(arr.shape)


def half_space_aps(signed_distance, delta: float, p: int):
    """Fixed-bandwidth APS of {signed distance >= 0}; 0 or 1 outside the band."""
    v = np.atleast_1d(np.asarray(signed_distance, dtype=float)) / delta
    out = np.where(v >= 1, 1.0, 0.0)
    inside = np.abs(v) < 1
    if inside.any():
        out[inside] = cap_fraction(v[inside], p)
    return out
