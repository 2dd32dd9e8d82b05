"""Parametric laws used for mixing parameters, interarrival times and claims.

Rates are always *rates*: ``Exponential(rate=b)`` has mean ``1/b`` and
``Gamma(rate=b, shape=a)`` has mean ``a/b``.

All evaluation methods accept scalars or numpy arrays and return the same
shape. ``pdf`` is only defined for absolutely continuous laws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConstraintError, DomainError, UnsupportedOperationError

WEIGHT_TOL = 1e-12


def _arr(x):
    return np.asarray(x, dtype=float)


def _ret(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ConstraintError(f"{name} must be a positive finite real, got {value!r}")
    return value


def _weights(ws) -> tuple[float, ...]:
    ws = tuple(float(w) for w in ws)
    if not ws or any(w < 0 or not math.isfinite(w) for w in ws):
        raise ConstraintError("weights must be nonnegative and finite")
    if abs(math.fsum(ws) - 1.0) > WEIGHT_TOL:
        raise ConstraintError(f"weights must sum to 1 (got {math.fsum(ws)!r})")
    return ws


# -- vectorized family kernels (parameters broadcast against x) -------------


def exp_logpdf(x, rate):
    return np.log(rate) - rate * x


def exp_logsf(x, rate):
    return -rate * x


def gamma_logpdf(x, rate, shape):
    with np.errstate(divide="ignore"):
        return shape * np.log(rate) + (shape - 1.0) * np.log(x) - rate * x - special.gammaln(shape)


def gamma_sf(x, rate, shape):
    return special.gammaincc(shape, rate * np.maximum(x, 0.0))


def gamma_logsf(x, rate, shape):
    z = rate * np.maximum(_arr(x), 0.0)
    shape = np.broadcast_to(_arr(shape), z.shape) if np.ndim(shape) else shape
    with np.errstate(divide="ignore"):
        out = np.log(special.gammaincc(shape, z))
    bad = ~np.isfinite(out)
    if np.any(bad):
        # deep tail: asymptotic expansion of the upper incomplete gamma
        zb = z[bad] if np.ndim(z) else z
        ab = shape[bad] if np.ndim(shape) else shape
        series = 1.0 + (ab - 1.0) / zb + (ab - 1.0) * (ab - 2.0) / zb**2
        tail = (ab - 1.0) * np.log(zb) - zb - special.gammaln(ab) + np.log(series)
        if np.ndim(out):
            out = out.copy()
            out[bad] = tail
        else:
            out = tail
    return out


def hyperexp_logpdf(x, weights, rates):
    """Log density of a finite exponential mixture; last axis indexes components."""
    x = _arr(x)[..., None]
    terms = np.log(weights) + np.log(rates) - rates * x
    return special.logsumexp(terms, axis=-1)


def hyperexp_logsf(x, weights, rates):
    x = _arr(x)[..., None]
    with np.errstate(divide="ignore"):
        terms = np.log(weights) - rates * x
    return special.logsumexp(terms, axis=-1)


# -- laws --------------------------------------------------------------------


class Law:
    """Base class. Subclasses are frozen dataclasses."""

    family: ClassVar[str] = ""
    continuous: ClassVar[bool] = True
    dim: ClassVar[int] = 1

    def logpdf(self, x):
        raise UnsupportedOperationError(f"{self.family}: density is not defined")

    def pdf(self, x):
        if not self.continuous:
            raise UnsupportedOperationError(f"{self.family} law has no Lebesgue density")
        x = _arr(x)
        lo, hi = self.support()
        inside = (x >= lo) & (x <= hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inside, np.exp(self.logpdf(np.where(inside, x, 0.5 * (lo + min(hi, lo + 1.0))))), 0.0)
        return _ret(x, out)

    def cdf(self, x):
        x = _arr(x)
        return _ret(x, 1.0 - _arr(self.sf(x)))

    def sf(self, x):
        raise UnsupportedOperationError(f"{self.family}: survival function not available")

    def logsf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.sf(x))

    def ppf(self, q):
        raise UnsupportedOperationError(f"{self.family}: quantile function not available")

    def isf(self, p):
        """Inverse survival function."""
        return self.ppf(1.0 - _arr(p)) if np.ndim(p) else self.ppf(1.0 - float(p))

    def mean(self) -> float:
        raise UnsupportedOperationError(f"{self.family}: mean not available")

    def var(self) -> float:
        raise UnsupportedOperationError(f"{self.family}: variance not available")

    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def sample(self, rng: np.random.Generator, size=None):
        raise UnsupportedOperationError(f"{self.family}: sampling not available")

    def mgf(self, r: float) -> float:
        """E[exp(r X)] by quadrature unless a subclass knows better."""
        lo, hi = self.support()
        val, _ = integrate.quad(lambda x: math.exp(r * x) * self.pdf(x), lo, hi, limit=200)
        return val

    def to_dict(self) -> dict[str, Any]:
        raise UnsupportedOperationError(f"{type(self).__name__} is not serializable")


@dataclass(frozen=True)
class Exponential(Law):
    rate: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def logpdf(self, x):
        return exp_logpdf(_arr(x), self.rate)

    def sf(self, x):
        x = _arr(x)
        return _ret(x, np.exp(-self.rate * np.maximum(x, 0.0)))

    def logsf(self, x):
        x = _arr(x)
        return _ret(x, exp_logsf(np.maximum(x, 0.0), self.rate))

    def ppf(self, q):
        q = _arr(q)
        return _ret(q, -np.log1p(-q) / self.rate)

    def isf(self, p):
        p = _arr(p)
        return _ret(p, -np.log(p) / self.rate)

    def mean(self):
        return 1.0 / self.rate

    def var(self):
        return 1.0 / self.rate**2

    def mgf(self, r):
        if r >= self.rate:
            return math.inf
        return self.rate / (self.rate - r)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def to_dict(self):
        return {"family": self.family, "rate": self.rate}


@dataclass(frozen=True)
class Gamma(Law):
    rate: float
    shape: float
    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))
        object.__setattr__(self, "shape", _positive("shape", self.shape))

    def logpdf(self, x):
        return gamma_logpdf(_arr(x), self.rate, self.shape)

    def sf(self, x):
        x = _arr(x)
        return _ret(x, gamma_sf(x, self.rate, self.shape))

    def logsf(self, x):
        x = _arr(x)
        return _ret(x, gamma_logsf(x, self.rate, self.shape))

    def ppf(self, q):
        q = _arr(q)
        return _ret(q, special.gammaincinv(self.shape, q) / self.rate)

    def isf(self, p):
        p = _arr(p)
        return _ret(p, special.gammainccinv(self.shape, p) / self.rate)

    def mean(self):
        return self.shape / self.rate

    def var(self):
        return self.shape / self.rate**2

    def mgf(self, r):
        if r >= self.rate:
            return math.inf
        return (self.rate / (self.rate - r)) ** self.shape

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def to_dict(self):
        return {"family": self.family, "rate": self.rate, "shape": self.shape}


@dataclass(frozen=True)
class HyperExponential(Law):
    weights: tuple[float, ...]
    rates: tuple[float, ...]
    family: ClassVar[str] = "hyperexponential"

    def __post_init__(self):
        object.__setattr__(self, "weights", _weights(self.weights))
        object.__setattr__(self, "rates", tuple(_positive("rate", r) for r in self.rates))
        if len(self.weights) != len(self.rates):
            raise ConstraintError("weights and rates must have equal length")

    def logpdf(self, x):
        return hyperexp_logpdf(x, np.array(self.weights), np.array(self.rates))

    def sf(self, x):
        x = _arr(x)
        return _ret(x, np.exp(hyperexp_logsf(np.maximum(x, 0.0), np.array(self.weights), np.array(self.rates))))

    def logsf(self, x):
        x = _arr(x)
        return _ret(x, hyperexp_logsf(np.maximum(x, 0.0), np.array(self.weights), np.array(self.rates)))

    def mean(self):
        return math.fsum(w / b for w, b in zip(self.weights, self.rates))

    def var(self):
        m2 = math.fsum(2.0 * w / b**2 for w, b in zip(self.weights, self.rates))
        return m2 - self.mean() ** 2

    def mgf(self, r):
        if r >= min(self.rates):
            return math.inf
        return math.fsum(w * b / (b - r) for w, b in zip(self.weights, self.rates))

    def isf(self, p):
        # survival is a mixture of exponentials; bracket between the extreme component quantiles
        p = _arr(p)
        lo_rate, hi_rate = max(self.rates), min(self.rates)
        out = np.empty(p.shape)
        for i, v in np.ndenumerate(p):
            if not 0 < v <= 1:
                out[i] = 0.0 if v >= 1 else math.inf
                continue
            target = math.log(v)
            a, b = -target / lo_rate, -target / hi_rate
            out[i] = a if a == b else optimize.brentq(lambda x: float(self.logsf(x)) - target, a, b, xtol=1e-14, rtol=1e-15)
        return _ret(p, out)

    def ppf(self, q):
        q = _arr(q)
        return _ret(q, self.isf(1.0 - q))

    def sample(self, rng, size=None):
        n = 1 if size is None else int(np.prod(size))
        comp = np.searchsorted(np.cumsum(self.weights), rng.random(n), side="right")
        comp = np.minimum(comp, len(self.rates) - 1)
        out = rng.exponential(1.0, n) / np.array(self.rates)[comp]
        return float(out[0]) if size is None else out.reshape(size)

    def to_dict(self):
        return {"family": self.family, "weights": list(self.weights), "rates": list(self.rates)}


@dataclass(frozen=True)
class Uniform(Law):
    lo: float = 0.0
    hi: float = 1.0
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ConstraintError("uniform law needs lo < hi")

    def support(self):
        return (float(self.lo), float(self.hi))

    def logpdf(self, x):
        return np.full_like(_arr(x), -math.log(self.hi - self.lo))

    def sf(self, x):
        x = _arr(x)
        return _ret(x, np.clip((self.hi - x) / (self.hi - self.lo), 0.0, 1.0))

    def ppf(self, q):
        q = _arr(q)
        return _ret(q, self.lo + q * (self.hi - self.lo))

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def var(self):
        return (self.hi - self.lo) ** 2 / 12.0

    def mgf(self, r):
        if r == 0:
            return 1.0
        return (math.exp(r * self.hi) - math.exp(r * self.lo)) / (r * (self.hi - self.lo))

    def sample(self, rng, size=None):
        return self.lo + (self.hi - self.lo) * rng.random(size)

    def to_dict(self):
        return {"family": self.family, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Beta(Law):
    p: float
    q: float
    family: ClassVar[str] = "beta"

    def __post_init__(self):
        object.__setattr__(self, "p", _positive("p", self.p))
        object.__setattr__(self, "q", _positive("q", self.q))

    def support(self):
        return (0.0, 1.0)

    def logpdf(self, x):
        x = _arr(x)
        with np.errstate(divide="ignore"):
            return (self.p - 1.0) * np.log(x) + (self.q - 1.0) * np.log1p(-x) - special.betaln(self.p, self.q)

    def sf(self, x):
        x = _arr(x)
        return _ret(x, special.betainc(self.q, self.p, 1.0 - np.clip(x, 0.0, 1.0)))

    def ppf(self, q):
        q = _arr(q)
        return _ret(q, special.betaincinv(self.p, self.q, q))

    def mean(self):
        return self.p / (self.p + self.q)

    def var(self):
        s = self.p + self.q
        return self.p * self.q / (s * s * (s + 1.0))

    def sample(self, rng, size=None):
        return rng.beta(self.p, self.q, size)

    def to_dict(self):
        return {"family": self.family, "p": self.p, "q": self.q}


@dataclass(frozen=True)
class Degenerate(Law):
    point: float
    family: ClassVar[str] = "degenerate"
    continuous: ClassVar[bool] = False

    def support(self):
        return (float(self.point), float(self.point))

    def sf(self, x):
        x = _arr(x)
        return _ret(x, np.where(x < self.point, 1.0, 0.0))

    def ppf(self, q):
        q = _arr(q)
        return _ret(q, np.full_like(q, float(self.point)))

    def mean(self):
        return float(self.point)

    def var(self):
        return 0.0

    def mgf(self, r):
        return math.exp(r * self.point)

    def sample(self, rng, size=None):
        if size is None:
            return float(self.point)
        return np.full(size, float(self.point))

    def to_dict(self):
        return {"family": self.family, "point": self.point}


@dataclass(frozen=True)
class FiniteDiscrete(Law):
    atoms: tuple[float, ...]
    weights: tuple[float, ...]
    family: ClassVar[str] = "discrete"
    continuous: ClassVar[bool] = False

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        weights = _weights(self.weights)
        if len(atoms) != len(weights):
            raise ConstraintError("atoms and weights must have equal length")
        order = sorted(range(len(atoms)), key=atoms.__getitem__)
        object.__setattr__(self, "atoms", tuple(atoms[i] for i in order))
        object.__setattr__(self, "weights", tuple(weights[i] for i in order))

    def support(self):
        return (self.atoms[0], self.atoms[-1])

    def sf(self, x):
        x = _arr(x)
        a = np.array(self.atoms)
        w = np.array(self.weights)
        out = (w[None, :] * (a[None, :] > x.reshape(-1, 1))).sum(axis=1).reshape(x.shape)
        return _ret(x, out)

    def mean(self):
        return math.fsum(a * w for a, w in zip(self.atoms, self.weights))

    def var(self):
        m = self.mean()
        return math.fsum(w * (a - m) ** 2 for a, w in zip(self.atoms, self.weights))

    def mgf(self, r):
        return math.fsum(w * math.exp(r * a) for a, w in zip(self.atoms, self.weights))

    def sample(self, rng, size=None):
        n = 1 if size is None else int(np.prod(size))
        idx = np.searchsorted(np.cumsum(self.weights), rng.random(n), side="right")
        out = np.array(self.atoms)[np.minimum(idx, len(self.atoms) - 1)]
        return float(out[0]) if size is None else out.reshape(size)

    def to_dict(self):
        return {"family": self.family, "atoms": list(self.atoms), "weights": list(self.weights)}


@dataclass(frozen=True)
class Shifted(Law):
    """``shift + Y`` with ``Y ~ base``; used for mixing laws on ``(1, inf)``."""

    base: Law
    shift: float
    family: ClassVar[str] = "shifted"

    @property
    def continuous(self):  # type: ignore[override]
        return self.base.continuous

    def support(self):
        lo, hi = self.base.support()
        return (lo + self.shift, hi + self.shift)

    def logpdf(self, x):
        return self.base.logpdf(_arr(x) - self.shift)

    def sf(self, x):
        return self.base.sf(_arr(x) - self.shift) if np.ndim(x) else float(self.base.sf(float(x) - self.shift))

    def logsf(self, x):
        return self.base.logsf(_arr(x) - self.shift)

    def ppf(self, q):
        return self.base.ppf(q) + self.shift

    def isf(self, p):
        return self.base.isf(p) + self.shift

    def mean(self):
        return self.base.mean() + self.shift

    def var(self):
        return self.base.var()

    def mgf(self, r):
        return math.exp(r * self.shift) * self.base.mgf(r)

    def sample(self, rng, size=None):
        return self.base.sample(rng, size) + self.shift

    def to_dict(self):
        return {"family": self.family, "shift": self.shift, "base": self.base.to_dict()}


@dataclass(frozen=True)
class Product(Law):
    """Independent product of one-dimensional laws (a mixing law on R^d)."""

    components: tuple[Law, ...]
    family: ClassVar[str] = "product"

    @property
    def dim(self):  # type: ignore[override]
        return len(self.components)

    @property
    def continuous(self):  # type: ignore[override]
        return all(c.continuous for c in self.components)

    def logpdf(self, x):
        x = np.atleast_2d(_arr(x))
        return sum(c.logpdf(x[:, i]) for i, c in enumerate(self.components))

    def pdf(self, x):
        x = np.atleast_2d(_arr(x))
        out = np.ones(x.shape[0])
        for i, c in enumerate(self.components):
            out = out * c.pdf(x[:, i])
        return out

    def mean(self):
        return np.array([c.mean() for c in self.components])

    def var(self):
        return np.array([c.var() for c in self.components])

    def support(self):
        raise UnsupportedOperationError("product law: use per-component supports")

    def sample(self, rng, size=None):
        n = 1 if size is None else int(size)
        out = np.column_stack([c.sample(rng, n) for c in self.components])
        return out[0] if size is None else out

    def to_dict(self):
        return {"family": self.family, "components": [c.to_dict() for c in self.components]}


@dataclass(frozen=True)
class TiltedLaw(Law):
    """Law with density ``exp(log_weight(x))`` relative to ``base``.

    Sampling is by rejection from ``base`` and needs ``envelope >= sup exp(log_weight)``.
    """

    base: Law
    log_weight: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    envelope: float | None = None
    family: ClassVar[str] = "tilted"

    @property
    def dim(self):  # type: ignore[override]
        return self.base.dim

    @property
    def continuous(self):  # type: ignore[override]
        return self.base.continuous

    def support(self):
        return self.base.support()

    def logpdf(self, x):
        return self.base.logpdf(x) + self.log_weight(_arr(x))

    def sf(self, x):
        lo, hi = self.support()
        x = _arr(x)
        vals = [
            integrate.quad(lambda y: float(self.pdf(y)), max(float(v), lo), hi, limit=200)[0] if v < hi else 0.0
            for v in np.atleast_1d(x)
        ]
        out = np.minimum(np.array(vals), 1.0).reshape(x.shape)
        return _ret(x, out)

    def mean(self):
        lo, hi = self.support()
        val, _ = integrate.quad(lambda y: y * float(self.pdf(y)), lo, hi, limit=200)
        return val

    def var(self):
        lo, hi = self.support()
        m2, _ = integrate.quad(lambda y: y * y * float(self.pdf(y)), lo, hi, limit=200)
        return m2 - self.mean() ** 2

    def sample(self, rng, size=None):
        if self.envelope is None:
            raise UnsupportedOperationError("tilted law sampling needs a rejection envelope")
        n = 1 if size is None else int(size)
        log_env = math.log(self.envelope)
        out = []
        got = 0
        while got < n:
            batch = max(16, 2 * (n - got))
            x = self.base.sample(rng, batch)
            lw = self.log_weight(x)
            if np.any(lw > log_env + 1e-9):
                raise DomainError("rejection envelope is below the tilt weight")
            keep = np.log(rng.random(batch)) < lw - log_env
            out.append(x[keep])
            got += int(keep.sum())
        res = np.concatenate(out)[:n]
        return res[0] if size is None else res


@dataclass(frozen=True)
class PowerSurvival(Law):
    """Law whose survival function is ``base.sf(x) ** power`` (0 < power <= 1)."""

    base: Law
    power: float
    family: ClassVar[str] = "power_survival"

    def __post_init__(self):
        if not (0 < self.power <= 1):
            raise ConstraintError("power must lie in (0, 1]")

    def support(self):
        return self.base.support()

    def logpdf(self, x):
        x = _arr(x)
        return math.log(self.power) + (self.power - 1.0) * self.base.logsf(x) + self.base.logpdf(x)

    def sf(self, x):
        x = _arr(x)
        return _ret(x, _arr(self.base.sf(x)) ** self.power)

    def ppf(self, q):
        q = _arr(q)
        return _ret(q, self.base.ppf(1.0 - (1.0 - q) ** (1.0 / self.power)))

    def mean(self):
        return survival_integral(self.base, self.power)[0]

    def var(self):
        lo, hi = self.support()
        m2, _ = _quad(lambda y: 2.0 * y * float(self.sf(y)), lo, hi)
        return m2 - self.mean() ** 2

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self.base.ppf(1.0 - u ** (1.0 / self.power))

    def to_dict(self):
        return {"family": self.family, "power": self.power, "base": self.base.to_dict()}


def _quad(fn, lo, hi, **kw):
    kw.setdefault("limit", 500)
    kw.setdefault("epsabs", 1e-12)
    kw.setdefault("epsrel", 1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        return integrate.quad(fn, lo, hi, **kw)


def survival_integral(law: Law, power: float = 1.0) -> tuple[float, float]:
    """``int_0^inf sf(x)**power dx`` with an error estimate.

    Unbounded supports are split at the point where ``sf**power`` drops to
    1e-14; the remaining tail is integrated separately and its error added.
    """
    lo, hi = law.support()
    lo = max(lo, 0.0)
    f = lambda y: float(law.sf(y)) ** power  # noqa: E731
    total, err = lo, 0.0  # sf == 1 below the support
    if math.isinf(hi):
        cut = float(law.isf(1e-14 ** (1.0 / power)))
        mid = lo + 0.5 * (cut - lo)
        for a, b in ((lo, mid), (mid, cut), (cut, math.inf)):
            v, e = _quad(f, a, b)
            total += v
            err += e
    else:
        v, e = _quad(f, lo, hi)
        total += v
        err += e
    return total, err


# -- Radon-Nikodym ratio between Exp(rho) and a kernel law -------------------


def log_rn_exp_over_kernel(kernel_law: Law, rho: float, w) -> Any:
    """``log( rho e^{-rho w} / k(w) )`` where ``k`` is the kernel density."""
    w = _arr(w)
    if np.any(w <= 0):
        raise DomainError("interarrival times must be positive")
    lk = _arr(kernel_law.logpdf(w))
    if np.any(~np.isfinite(lk)):
        raise DomainError("kernel density vanishes at an observed interarrival time")
    return _ret(w, exp_logpdf(w, rho) - lk)


def rn_exp_over_kernel(kernel_law: Law, rho: float, w) -> Any:
    w = _arr(w)
    return _ret(w, np.exp(log_rn_exp_over_kernel(kernel_law, rho, w)))


# -- serialization ------------------------------------------------------------

_SIMPLE = {
    "exponential": (Exponential, ("rate",)),
    "gamma": (Gamma, ("rate", "shape")),
    "uniform": (Uniform, ("lo", "hi")),
    "beta": (Beta, ("p", "q")),
    "degenerate": (Degenerate, ("point",)),
}


def law_from_dict(d: dict[str, Any]) -> Law:
    d = dict(d)
    family = d.pop("family", None)
    if family in _SIMPLE:
        cls, names = _SIMPLE[family]
        extra = set(d) - set(names)
        if extra:
            raise ConstraintError(f"unknown parameters for {family}: {sorted(extra)}")
        missing = [n for n in names if n not in d and not (cls is Uniform)]
        if missing:
            raise ConstraintError(f"missing parameters for {family}: {missing}")
        return cls(**{k: float(v) for k, v in d.items()})
    if family == "hyperexponential":
        return HyperExponential(tuple(d["weights"]), tuple(d["rates"]))
    if family == "discrete":
        return FiniteDiscrete(tuple(d["atoms"]), tuple(d["weights"]))
    if family == "shifted":
        return Shifted(law_from_dict(d["base"]), float(d["shift"]))
    if family == "product":
        return Product(tuple(law_from_dict(c) for c in d["components"]))
    if family == "power_survival":
        return PowerSurvival(law_from_dict(d["base"]), float(d["power"]))
    raise ConstraintError(f"unknown law family {family!r}")
