"""Domain types, covariate standardization and the seeded-randomness contract."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError, EmptyDataset, NonBinary

_CONSTANT_TOL = 1e-12


def _frozen(a, dtype=float, ndim=1) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(len(arr), 0)
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_binary(name: str, a: np.ndarray) -> None:
    bad = ~((a == 0) | (a == 1))
    if bad.any():
        raise NonBinary(name, a[bad][0].item())


@dataclass(frozen=True)
class StandardizationMap:
    """Affine map x -> (x - mean) / std applied column-wise to continuous covariates.

    Constant columns are recorded with ``constant=True`` and mapped by the
    identity (mean 0, std 1) so they are neither shifted nor divided by zero.
    """

    means: np.ndarray
    stddevs: np.ndarray
    constant: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.means) / self.stddevs

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.stddevs + self.means

    @classmethod
    def identity(cls, p: int) -> "StandardizationMap":
        return cls(np.zeros(p), np.ones(p), np.zeros(p, dtype=bool))


@dataclass(frozen=True)
class Dataset:
    """Observed sample ``(Y, X, D, Z)``.

    ``x_cont`` is n-by-p_c, ``x_disc`` is n-by-p_d integer codes (p_d may be
    zero).  ``z`` must be binary.  ``d`` must be binary unless
    ``continuous_treatment`` is set, which permits e.g. funding amounts as the
    treatment column.  ``extra`` carries named auxiliary columns such as
    covariates for balance regressions.
    """

    y: np.ndarray
    x_cont: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x_disc: np.ndarray | None = None
    extra: Mapping[str, np.ndarray] = field(default_factory=dict)
    cont_names: tuple[str, ...] | None = None
    disc_names: tuple[str, ...] | None = None
    continuous_treatment: bool = False
    standardization: StandardizationMap | None = None

    def __post_init__(self):
        y = _frozen(self.y)
        n = len(y)
        x_cont = _frozen(self.x_cont, ndim=2)
        if self.x_disc is None:
            x_disc = _frozen(np.zeros((n, 0), dtype=np.int64), dtype=np.int64, ndim=2)
        else:
            raw = np.asarray(self.x_disc)
            if raw.size and not np.all(np.equal(np.mod(raw, 1), 0)):
                raise DataError("discrete covariates must be integer codes")
            x_disc = _frozen(raw, dtype=np.int64, ndim=2)
        d = _frozen(self.d)
        z = _frozen(self.z)
        if n < 1:
            raise EmptyDataset("dataset needs at least one row")
        for name, arr in (("x_cont", x_cont), ("x_disc", x_disc), ("d", d), ("z", z)):
            if arr.shape[0] != n:
                raise DataError(f"column {name} has length {arr.shape[0]}, expected {n}")
        _check_binary("z", z)
        if not self.continuous_treatment:
            _check_binary("d", d)
        extra = {}
        for k, v in dict(self.extra).items():
            arr = _frozen(v)
            if len(arr) != n:
                raise DataError(f"extra column {k!r} has length {len(arr)}, expected {n}")
            extra[k] = arr
        cont_names = tuple(self.cont_names) if self.cont_names is not None else tuple(
            f"x{j + 1}" for j in range(x_cont.shape[1]))
        disc_names = tuple(self.disc_names) if self.disc_names is not None else tuple(
            f"g{j + 1}" for j in range(x_disc.shape[1]))
        if len(cont_names) != x_cont.shape[1] or len(disc_names) != x_disc.shape[1]:
            raise DataError("covariate names do not match covariate columns")
        for k, v in dict(y=y, x_cont=x_cont, x_disc=x_disc, d=d, z=z, extra=extra,
                         cont_names=cont_names, disc_names=disc_names).items():
            object.__setattr__(self, k, v)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p_cont(self) -> int:
        return self.x_cont.shape[1]

    @property
    def p_disc(self) -> int:
        return self.x_disc.shape[1]

    def raw_x_cont(self) -> np.ndarray:
        """Continuous covariates in their original units."""
        if self.standardization is None:
            return self.x_cont
        return self.standardization.invert(self.x_cont)

    def subset(self, mask) -> "Dataset":
        return replace(
            self, y=self.y[mask], x_cont=self.x_cont[mask], d=self.d[mask],
            z=self.z[mask], x_disc=self.x_disc[mask],
            extra={k: v[mask] for k, v in self.extra.items()})


@dataclass(frozen=True)
class PotentialOutcomes:
    """Simulation-only companion holding Y(1), Y(0), D(1), D(0)."""

    y1: np.ndarray
    y0: np.ndarray
    d1: np.ndarray
    d0: np.ndarray

    def __post_init__(self):
        for k in ("y1", "y0", "d1", "d0"):
            object.__setattr__(self, k, _frozen(getattr(self, k)))
        n = len(self.y1)
        if any(len(getattr(self, k)) != n for k in ("y0", "d1", "d0")):
            raise DataError("potential outcome columns differ in length")
        _check_binary("d1", self.d1)
        _check_binary("d0", self.d0)

    @property
    def effect(self) -> np.ndarray:
        return self.y1 - self.y0

    @property
    def complier_shift(self) -> np.ndarray:
        return self.d1 - self.d0

    def outcome_under(self, z: int) -> np.ndarray:
        """Y_z = D(z) Y(1) + (1 - D(z)) Y(0)."""
        dz = self.d1 if z == 1 else self.d0
        return np.where(dz == 1, self.y1, self.y0)

    def realize(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Observed ``(y, d)`` implied by recommendations ``z``."""
        z = np.asarray(z)
        d = np.where(z == 1, self.d1, self.d0)
        y = np.where(d == 1, self.y1, self.y0)
        return y, d


def standardize(dataset: Dataset) -> tuple[Dataset, StandardizationMap]:
    """Center and scale continuous covariates to mean 0 and variance 1.

    Uses the population variance (denominator n).  Discrete covariates are
    left untouched.  If ``dataset`` already carries a map, the new map is
    composed with it so ``raw_x_cont`` keeps returning original units.
    """
    if dataset.n < 2:
        raise EmptyDataset("standardization needs at least two rows")
    x = dataset.x_cont
    means = x.mean(axis=0)
    std = x.std(axis=0)
    scale = np.maximum(np.abs(means), 1.0)
    constant = std <= _CONSTANT_TOL * scale
    means = np.where(constant, 0.0, means)
    std = np.where(constant, 1.0, std)
    step = StandardizationMap(means, std, constant)
    prev = dataset.standardization
    if prev is None:
        total = step
    else:
        total = StandardizationMap(prev.means + prev.stddevs * means,
                                   prev.stddevs * std, prev.constant | constant)
    for a in (total.means, total.stddevs, total.constant):
        a.setflags(write=False)
    return replace(dataset, x_cont=step.apply(x), standardization=total), total


def _as_key(value) -> int:
    if isinstance(value, (float, np.floating)):
        return struct.unpack("<Q", struct.pack("<d", float(value)))[0]
    value = int(value)
    if value < 0:
        raise ConfigError(f"seed components must be non-negative, got {value}")
    return value


def derive_seed(seed: int, *keys) -> int:
    """Deterministic child seed keyed by ``(seed, *keys)``.

    Float keys are hashed by their IEEE-754 bit pattern.
    """
    ss = np.random.SeedSequence([_as_key(seed), *(_as_key(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# Observation streams are non-overlapping blocks of one PCG64 sequence.
STREAM_STRIDE = 1 << 64


def base_bit_generator(seed: int) -> np.random.PCG64:
    return np.random.PCG64(np.random.SeedSequence(_as_key(seed)))


def rng_stream(seed: int, index: int) -> np.random.Generator:
    """Random stream ``index`` of ``seed``; depends on nothing else.

    Stream i is the PCG64 sequence seeded by ``seed`` advanced by i * 2**64
    draws, so streams never overlap in practice and any one of them can be
    positioned in O(log i) time.
    """
    if int(index) < 0:
        raise ConfigError("stream index must be non-negative")
    bg = base_bit_generator(seed)
    bg.advance(int(index) * STREAM_STRIDE)
    return np.random.Generator(bg)


def make_rng_streams(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent per-observation streams; stream i is ``rng_stream(seed, i)``."""
    return [rng_stream(seed, i) for i in range(n)]
