"""Catalog of regular value distributions on bounded supports.

Every distribution exposes a truncated density/CDF pair on its support,
inverse-CDF sampling, the Myerson virtual value c(v) = v - (1 - F(v)) / f(v)
and its (generalized) inverse.  All maps accept scalars or numpy arrays.

Two truncation conventions exist for the exponential family:

* ``texp2`` renormalizes the Exp(2) density on (0, 1), so the truncated
  density is 2 e^{-2v} / (1 - e^{-2}).
* ``cexp2`` caps draws at 1, leaving an atom of mass e^{-2} at the upper
  endpoint and the untruncated hazard below it.  Published revenue tables
  for the exponential settings are only reproducible under this convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

__all__ = [
    "DistributionSpec",
    "DomainError",
    "NoSolutionError",
    "get_distribution",
    "pdf",
    "cdf",
    "virtual_value",
    "inverse_virtual_value",
    "inverse_virtual_value_batch",
    "sample",
    "sample_with",
    "CATALOG",
]

_BISECTION_TOL = 1e-10


class DomainError(ValueError):
    """Argument outside the distribution's support (or zero density)."""


class NoSolutionError(ValueError):
    """No point in the support attains the requested virtual value."""


@dataclass(frozen=True)
class DistributionSpec:
    """Immutable description of a catalog distribution.

    ``atom_hi`` is the probability mass sitting exactly at ``support_hi``;
    it is zero for all density-renormalized members and e^{-2} for the
    capped exponential.
    """

    kind: str
    support_lo: float = 0.0
    support_hi: float = 1.0
    atom_hi: float = 0.0

    @property
    def name(self) -> str:
        return self.kind


# Truncated-normal constants for N(0.5, 0.1) on (0, 1).
_TN_MEAN = 0.5
_TN_SD = 0.1
_TN_ZLO = norm.cdf((0.0 - _TN_MEAN) / _TN_SD)
_TN_ZHI = norm.cdf((1.0 - _TN_MEAN) / _TN_SD)
_TN_MASS = _TN_ZHI - _TN_ZLO

# Truncated-lognormal constants for LN(0.1, sigma^2 = 1.44) on (0, 1).
_LN_MU = 0.1
_LN_SIG = 1.2
_LN_ZHI = norm.cdf((0.0 - _LN_MU) / _LN_SIG)  # F0(1) = Phi((ln 1 - mu)/sig)
_LN_MASS = _LN_ZHI  # F0(0+) = 0

_EXP_RATE = 2.0
_EXP_MASS = 1.0 - math.exp(-2.0)


def _check_support(spec: DistributionSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(v < spec.support_lo - 1e-12) or np.any(v > spec.support_hi + 1e-12):
        raise DomainError(f"value outside support [{spec.support_lo}, {spec.support_hi}]")
    return np.clip(v, spec.support_lo, spec.support_hi)


def _scalar_like(v, out: np.ndarray):
    return float(out) if np.isscalar(v) or np.ndim(v) == 0 else out


def pdf(spec: DistributionSpec, v):
    """Density of the (truncated) distribution at ``v``.

    For atom-carrying members this is the continuous part only; the atom
    mass is reported by ``spec.atom_hi``.
    """
    x = _check_support(spec, v)
    k = spec.kind
    if k == "u01":
        out = np.ones_like(x)
    elif k == "texp2":
        out = _EXP_RATE * np.exp(-_EXP_RATE * x) / _EXP_MASS
    elif k == "cexp2":
        out = _EXP_RATE * np.exp(-_EXP_RATE * x)
    elif k == "tnorm":
        out = norm.pdf((x - _TN_MEAN) / _TN_SD) / _TN_SD / _TN_MASS
    elif k == "tlognorm":
        out = np.zeros_like(x)
        pos = x > 0.0
        xp = np.where(pos, x, 1.0)
        out = np.where(
            pos,
            norm.pdf((np.log(xp) - _LN_MU) / _LN_SIG) / (xp * _LN_SIG) / _LN_MASS,
            0.0,
        )
    else:
        raise ValueError(f"unknown distribution kind {k!r}")
    return _scalar_like(v, out)


def cdf(spec: DistributionSpec, v):
    """CDF of the (truncated) distribution at ``v``."""
    x = _check_support(spec, v)
    k = spec.kind
    if k == "u01":
        out = x.copy()
    elif k == "texp2":
        out = (1.0 - np.exp(-_EXP_RATE * x)) / _EXP_MASS
    elif k == "cexp2":
        out = np.where(x >= spec.support_hi, 1.0, 1.0 - np.exp(-_EXP_RATE * x))
    elif k == "tnorm":
        out = (norm.cdf((x - _TN_MEAN) / _TN_SD) - _TN_ZLO) / _TN_MASS
    elif k == "tlognorm":
        pos = x > 0.0
        xp = np.where(pos, x, 1.0)
        out = np.where(pos, norm.cdf((np.log(xp) - _LN_MU) / _LN_SIG) / _LN_MASS, 0.0)
    else:
        raise ValueError(f"unknown distribution kind {k!r}")
    return _scalar_like(v, np.clip(out, 0.0, 1.0))


def virtual_value(spec: DistributionSpec, v):
    """Myerson virtual value c(v) = v - (1 - F(v)) / f(v)."""
    x = _check_support(spec, v)
    k = spec.kind
    if k == "u01":
        out = 2.0 * x - 1.0
    elif k == "texp2":
        # (1 - F)/f = 1/2 - e^{2v-2}/2 after renormalization cancels
        out = x - 0.5 + 0.5 * np.exp(_EXP_RATE * x - 2.0)
    elif k == "cexp2":
        # untruncated hazard below the atom; no information rent at the top
        out = np.where(x >= spec.support_hi, spec.support_hi, x - 0.5)
    else:
        f = np.asarray(pdf(spec, x), dtype=float)
        F = np.asarray(cdf(spec, x), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(f > 0.0, x - (1.0 - F) / np.where(f > 0.0, f, 1.0), -np.inf)
        if np.ndim(v) == 0 and not np.all(f > 0.0):
            raise DomainError("zero density: virtual value undefined")
    return _scalar_like(v, out)


def inverse_virtual_value(spec: DistributionSpec, c: float) -> float:
    """Smallest v in the support with virtual_value(v) >= c.

    Returns the lower endpoint when every point qualifies; raises
    ``NoSolutionError`` when even the upper endpoint falls short.
    Bisection to 1e-10 absolute tolerance.
    """
    lo, hi = spec.support_lo, spec.support_hi
    c_hi = float(virtual_value(spec, hi))
    if c > c_hi:
        raise NoSolutionError(f"virtual value {c} exceeds c({hi}) = {c_hi}")
    try:
        c_lo = float(virtual_value(spec, lo))
    except DomainError:
        c_lo = -math.inf
    if c <= c_lo:
        return lo
    a, b = lo, hi
    while b - a > _BISECTION_TOL:
        mid = 0.5 * (a + b)
        try:
            c_mid = float(virtual_value(spec, mid))
        except DomainError:
            c_mid = -math.inf
        if c_mid >= c:
            b = mid
        else:
            a = mid
    return b


def inverse_virtual_value_batch(spec: DistributionSpec, c) -> np.ndarray:
    """Vectorized generalized inverse; infeasible entries come back as NaN."""
    c = np.asarray(c, dtype=float)
    lo, hi = spec.support_lo, spec.support_hi
    c_hi = float(virtual_value(spec, hi))
    a = np.full(c.shape, lo)
    b = np.full(c.shape, hi)
    steps = int(math.ceil(math.log2((hi - lo) / _BISECTION_TOL)))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for _ in range(steps):
            mid = 0.5 * (a + b)
            c_mid = np.asarray(virtual_value(spec, mid), dtype=float)
            c_mid = np.where(np.isfinite(c_mid), c_mid, -np.inf)
            take = c_mid >= c
            b = np.where(take, mid, b)
            a = np.where(take, a, mid)
    out = np.where(c <= -np.inf, lo, b)
    out = np.where(c > c_hi, np.nan, out)
    return out


def _ppf(spec: DistributionSpec, u: np.ndarray) -> np.ndarray:
    """Inverse CDF of the truncated distribution for u in [0, 1)."""
    k = spec.kind
    if k == "u01":
        return u
    if k == "texp2":
        return -np.log1p(-u * _EXP_MASS) / _EXP_RATE
    if k == "cexp2":
        return np.minimum(-np.log1p(-u) / _EXP_RATE, spec.support_hi)
    if k == "tnorm":
        return _TN_MEAN + _TN_SD * norm.ppf(_TN_ZLO + u * _TN_MASS)
    if k == "tlognorm":
        return np.exp(_LN_MU + _LN_SIG * norm.ppf(u * _LN_MASS))
    raise ValueError(f"unknown distribution kind {k!r}")


def sample_with(spec: DistributionSpec, rng: np.random.Generator, count) -> np.ndarray:
    """Inverse-CDF draws using an existing generator (``count`` may be a shape)."""
    u = rng.random(count)
    return np.clip(_ppf(spec, u), spec.support_lo, spec.support_hi)


def sample(spec: DistributionSpec, rng_seed: int, count: int) -> np.ndarray:
    """i.i.d. draws from the truncated distribution, deterministic per seed."""
    return sample_with(spec, np.random.default_rng(rng_seed), count)


CATALOG: dict[str, DistributionSpec] = {
    "u01": DistributionSpec("u01"),
    "texp2": DistributionSpec("texp2"),
    "cexp2": DistributionSpec("cexp2", atom_hi=math.exp(-2.0)),
    "tnorm": DistributionSpec("tnorm"),
    "tlognorm": DistributionSpec("tlognorm"),
}


def get_distribution(name: str) -> DistributionSpec:
    """Look up a catalog distribution by its config-file id."""
    try:
        return CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown distribution id {name!r}; known: {sorted(CATALOG)}") from None
