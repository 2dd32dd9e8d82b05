"""Compound mixed renewal risk models and path simulation.

A :class:`RiskModel` bundles a mixing law for the structural parameter
``theta``, an interarrival kernel ``theta -> K(theta)`` and a claim-size law.
Simulation draws ``theta`` once per path, then conditionally i.i.d.
interarrival times from ``K(theta)`` and i.i.d. claims independent of both.

Batches of paths are stored in ragged form (flat arrays plus offsets) so the
estimators downstream can work on whole blocks with numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import dist
from .dist import Law, law_from_dict
from .errors import (
    ConstraintError,
    ModelValidationError,
    OutOfWindowError,
    RunawaySimulationError,
)
from .streams import map_blocks

RUNAWAY_CAP = 10**7


def theta_rows(theta, dim: int | None = None) -> np.ndarray:
    """Coerce a parameter point or a batch of points to shape ``(n, d)``."""
    a = np.asarray(theta, dtype=float)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        if dim is None or dim == 1:
            return a.reshape(-1, 1) if dim == 1 else a.reshape(1, -1)
        return a.reshape(1, -1)
    return a


# -- interarrival kernels ---------------------------------------------------------


class Kernel:
    """Map from parameter points to interarrival laws.

    The vectorized methods take ``theta`` as rows ``(n, d)`` and return one
    value per row; the fallbacks loop over :meth:`law`.
    """

    dim: int = 1

    def law(self, theta) -> Law:
        raise NotImplementedError

    def mean(self, theta) -> np.ndarray:
        rows = theta_rows(theta, self.dim)
        return np.array([self.law(r).mean() for r in rows])

    def logpdf(self, w, theta) -> np.ndarray:
        rows = theta_rows(theta, self.dim)
        w = np.broadcast_to(np.asarray(w, dtype=float), (rows.shape[0],))
        return np.array([self.law(r).logpdf(x) for r, x in zip(rows, w)], dtype=float)

    def logsf(self, r, theta) -> np.ndarray:
        rows = theta_rows(theta, self.dim)
        r = np.broadcast_to(np.asarray(r, dtype=float), (rows.shape[0],))
        return np.array([self.law(t).logsf(x) for t, x in zip(rows, r)], dtype=float)

    def sample(self, theta, m: int, rng: np.random.Generator) -> np.ndarray:
        rows = theta_rows(theta, self.dim)
        return np.vstack([self.law(r).sample(rng, m) for r in rows])

    def is_exponential(self) -> bool:
        return False

    def rate(self, theta) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise ConstraintError(f"{type(self).__name__} is not serializable")


@dataclass(frozen=True)
class ExponentialKernel(Kernel):
    """``K(theta) = Exp(scale * theta)``."""

    scale: float = 1.0

    def rate(self, theta):
        return self.scale * theta_rows(theta, 1)[:, 0]

    def law(self, theta):
        return dist.Exponential(float(self.rate(theta)[0]))

    def mean(self, theta):
        return 1.0 / self.rate(theta)

    def logpdf(self, w, theta):
        return dist.exp_logpdf(np.asarray(w, dtype=float), self.rate(theta))

    def logsf(self, r, theta):
        return dist.exp_logsf(np.asarray(r, dtype=float), self.rate(theta))

    def sample(self, theta, m, rng):
        rate = self.rate(theta)
        return rng.exponential(1.0, (rate.shape[0], m)) / rate[:, None]

    def is_exponential(self):
        return True

    def to_dict(self):
        return {"family": "exponential", "scale": self.scale}


@dataclass(frozen=True)
class RateKernel(Kernel):
    """Exponential kernel with an arbitrary positive rate function (a Q-kernel)."""

    rate_fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    dim: int = 1
    label: str = "rate"

    def rate(self, theta):
        return np.asarray(self.rate_fn(theta_rows(theta, self.dim)), dtype=float)

    def law(self, theta):
        return dist.Exponential(float(self.rate(theta)[0]))

    def mean(self, theta):
        return 1.0 / self.rate(theta)

    def logpdf(self, w, theta):
        return dist.exp_logpdf(np.asarray(w, dtype=float), self.rate(theta))

    def logsf(self, r, theta):
        return dist.exp_logsf(np.asarray(r, dtype=float), self.rate(theta))

    def sample(self, theta, m, rng):
        rate = self.rate(theta)
        return rng.exponential(1.0, (rate.shape[0], m)) / rate[:, None]

    def is_exponential(self):
        return True


@dataclass(frozen=True)
class GammaKernel(Kernel):
    """``K(theta) = Ga(theta, shape)``: rate ``theta``, mean ``shape / theta``."""

    shape: float

    def __post_init__(self):
        if not self.shape > 0:
            raise ConstraintError("gamma kernel shape must be positive")

    def law(self, theta):
        return dist.Gamma(float(theta_rows(theta, 1)[0, 0]), self.shape)

    def mean(self, theta):
        return self.shape / theta_rows(theta, 1)[:, 0]

    def logpdf(self, w, theta):
        return dist.gamma_logpdf(np.asarray(w, dtype=float), theta_rows(theta, 1)[:, 0], self.shape)

    def logsf(self, r, theta):
        return dist.gamma_logsf(np.asarray(r, dtype=float), theta_rows(theta, 1)[:, 0], self.shape)

    def sample(self, theta, m, rng):
        rate = theta_rows(theta, 1)[:, 0]
        return rng.standard_gamma(self.shape, (rate.shape[0], m)) / rate[:, None]

    def is_exponential(self):
        return self.shape == 1.0

    def rate(self, theta):
        if self.shape != 1.0:
            raise NotImplementedError
        return theta_rows(theta, 1)[:, 0]

    def to_dict(self):
        return {"family": "gamma", "shape": self.shape}


@dataclass(frozen=True)
class HyperExponentialKernel(Kernel):
    """``K(theta) = sum_i w_i Exp(1/theta_i)``; component ``i`` has mean ``theta_i``."""

    weights: tuple[float, ...] = (0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "weights", dist._weights(self.weights))

    @property
    def dim(self):  # type: ignore[override]
        return len(self.weights)

    def _rates(self, theta):
        return 1.0 / theta_rows(theta, self.dim)

    def law(self, theta):
        return dist.HyperExponential(self.weights, tuple(self._rates(theta)[0]))

    def mean(self, theta):
        return theta_rows(theta, self.dim) @ np.array(self.weights)

    def logpdf(self, w, theta):
        return dist.hyperexp_logpdf(np.asarray(w, dtype=float), np.array(self.weights), self._rates(theta))

    def logsf(self, r, theta):
        return dist.hyperexp_logsf(np.asarray(r, dtype=float), np.array(self.weights), self._rates(theta))

    def sample(self, theta, m, rng):
        rows = theta_rows(theta, self.dim)
        n = rows.shape[0]
        comp = np.searchsorted(np.cumsum(self.weights), rng.random((n, m)), side="right")
        comp = np.minimum(comp, self.dim - 1)
        means = np.take_along_axis(rows, comp, axis=1)
        return rng.exponential(1.0, (n, m)) * means

    def to_dict(self):
        return {"family": "hyperexponential", "weights": list(self.weights)}


@dataclass(frozen=True)
class FixedKernel(Kernel):
    """Kernel that ignores ``theta`` (ordinary renewal interarrivals)."""

    law_: Law

    def law(self, theta):
        return self.law_

    def mean(self, theta):
        return np.full(theta_rows(theta, self.dim).shape[0], self.law_.mean())

    def logpdf(self, w, theta):
        return np.asarray(self.law_.logpdf(np.asarray(w, dtype=float)), dtype=float) + np.zeros(
            theta_rows(theta, self.dim).shape[0]
        )

    def logsf(self, r, theta):
        return np.asarray(self.law_.logsf(np.asarray(r, dtype=float)), dtype=float) + np.zeros(
            theta_rows(theta, self.dim).shape[0]
        )

    def sample(self, theta, m, rng):
        n = theta_rows(theta, self.dim).shape[0]
        return np.asarray(self.law_.sample(rng, n * m), dtype=float).reshape(n, m)

    def is_exponential(self):
        return isinstance(self.law_, dist.Exponential)

    def rate(self, theta):
        return np.full(theta_rows(theta, self.dim).shape[0], self.law_.rate)

    def to_dict(self):
        return {"family": "fixed", "law": self.law_.to_dict()}


def kernel_from_dict(d: dict[str, Any]) -> Kernel:
    d = dict(d)
    family = d.pop("family", None)
    if family == "exponential":
        return ExponentialKernel(float(d.pop("scale", 1.0)))
    if family == "gamma":
        return GammaKernel(float(d.pop("shape")))
    if family == "hyperexponential":
        return HyperExponentialKernel(tuple(float(w) for w in d.pop("weights", (0.5, 0.5))))
    if family == "fixed":
        return FixedKernel(law_from_dict(d.pop("law")))
    raise ConstraintError(f"unknown kernel family {family!r}")


# -- model -------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskModel:
    mixing: Law
    kernel: Kernel
    claims: Law

    @property
    def dim(self) -> int:
        return self.mixing.dim

    def sample_theta(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self.mixing.sample(rng, n), dtype=float).reshape(n, self.dim)

    def validate(self, grid: np.ndarray | None = None) -> None:
        if self.kernel.dim != self.dim:
            raise ModelValidationError(
                f"kernel expects {self.kernel.dim}-dimensional parameters, mixing law has {self.dim}"
            )
        lo, _ = self.claims.support()
        if lo < 0:
            raise ModelValidationError("claims must be supported on (0, inf)")
        if not self.claims.continuous and float(self.claims.sf(0.0)) < 1.0:
            raise ModelValidationError("claim law puts mass at 0")
        if grid is None:
            grid = theta_grid(self.mixing, 16)
        means = self.kernel.mean(grid)
        if not np.all(np.isfinite(means) & (means > 0)):
            raise ModelValidationError("conditional mean interarrival time must be finite and positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mixing": self.mixing.to_dict(),
            "kernel": self.kernel.to_dict(),
            "claims": self.claims.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RiskModel":
        return cls(law_from_dict(d["mixing"]), kernel_from_dict(d["kernel"]), law_from_dict(d["claims"]))


def conditional_mean_interarrival(model: RiskModel, theta) -> float:
    """``E[W_1 | theta]``, the mean of ``K(theta)``."""
    m = float(model.kernel.mean(theta_rows(theta, model.dim))[0])
    if not (math.isfinite(m) and m > 0):
        raise ModelValidationError(f"conditional mean interarrival time is {m!r}")
    return m


def theta_grid(mixing: Law, size: int = 64, lo: float = 0.001, hi: float = 0.999) -> np.ndarray:
    """Quantile-spaced grid over the mixing support, rows ``(n, d)``.

    Product laws get the Cartesian product of per-component grids.
    """
    if isinstance(mixing, dist.Product):
        axes = [theta_grid(c, size, lo, hi)[:, 0] for c in mixing.components]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])
    if isinstance(mixing, dist.Degenerate):
        return np.array([[mixing.point]])
    if isinstance(mixing, dist.FiniteDiscrete):
        return np.array(mixing.atoms).reshape(-1, 1)
    qs = np.linspace(lo, hi, size)
    try:
        pts = np.asarray(mixing.ppf(qs), dtype=float)
    except Exception:
        # no quantile function: empirical quantiles of a fixed-seed sample
        draws = np.asarray(mixing.sample(np.random.default_rng(0), 100_000), dtype=float)
        pts = np.quantile(draws, qs)
    return np.unique(pts).reshape(-1, 1)


# -- paths ----------------------------------------------------------------------


@dataclass
class Path:
    """One simulated trajectory.

    For horizon-stopped paths ``arrivals`` ends with the first epoch beyond
    ``horizon``; that overshoot arrival is kept so the residual time
    ``t - T_{N_t}`` and its survival factor are available for any
    ``t <= horizon``.
    """

    theta: np.ndarray
    arrivals: np.ndarray
    claims: np.ndarray
    horizon: float
    stop: str  # "horizon" or "count"

    def __post_init__(self):
        if len(self.arrivals) != len(self.claims):
            raise ModelValidationError("arrivals and claims must have equal length")

    @property
    def interarrivals(self) -> np.ndarray:
        return np.diff(self.arrivals, prepend=0.0)

    def _check(self, t: float) -> None:
        if t < 0 or t > self.horizon:
            raise OutOfWindowError(f"t={t} outside the covered window [0, {self.horizon}]")

    def count_at(self, t: float) -> int:
        self._check(t)
        return int(np.searchsorted(self.arrivals, t, side="right"))

    def aggregate_at(self, t: float) -> float:
        n = self.count_at(t)
        return math.fsum(self.claims[:n])

    def last_arrival(self, t: float) -> float:
        n = self.count_at(t)
        return float(self.arrivals[n - 1]) if n else 0.0


@dataclass
class PathBatch:
    """Ragged storage for many paths: path ``i`` owns ``offsets[i]:offsets[i+1]``."""

    thetas: np.ndarray
    arrivals: np.ndarray
    claims: np.ndarray
    offsets: np.ndarray
    horizon: np.ndarray
    stop: str

    @property
    def n(self) -> int:
        return self.thetas.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def path_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.lengths)

    def path(self, i: int) -> Path:
        a, b = self.offsets[i], self.offsets[i + 1]
        return Path(self.thetas[i].copy(), self.arrivals[a:b].copy(), self.claims[a:b].copy(), float(self.horizon[i]), self.stop)

    def __iter__(self):
        return (self.path(i) for i in range(self.n))

    def _check(self, t: float) -> None:
        if t < 0 or np.any(t > self.horizon):
            raise OutOfWindowError(f"t={t} lies beyond the covered window of some path")

    def counts_at(self, t: float) -> np.ndarray:
        self._check(t)
        mask = self.arrivals <= t
        return np.bincount(self.path_index[mask], minlength=self.n)

    def aggregates_at(self, t: float) -> np.ndarray:
        self._check(t)
        mask = self.arrivals <= t
        return np.bincount(self.path_index[mask], weights=self.claims[mask], minlength=self.n)

    def last_arrivals_at(self, t: float, counts: np.ndarray | None = None) -> np.ndarray:
        if counts is None:
            counts = self.counts_at(t)
        idx = self.offsets[:-1] + counts - 1
        return np.where(counts > 0, self.arrivals[np.maximum(idx, 0)] if self.arrivals.size else 0.0, 0.0)

    @classmethod
    def concat(cls, parts: list["PathBatch"]) -> "PathBatch":
        if len(parts) == 1:
            return parts[0]
        offs = [np.array([0])]
        base = 0
        for p in parts:
            offs.append(p.offsets[1:] + base)
            base += p.offsets[-1]
        return cls(
            np.vstack([p.thetas for p in parts]),
            np.concatenate([p.arrivals for p in parts]),
            np.concatenate([p.claims for p in parts]),
            np.concatenate(offs),
            np.concatenate([p.horizon for p in parts]),
            parts[0].stop,
        )


def _simulate_block(
    model: RiskModel,
    n: int,
    rng: np.random.Generator,
    horizon: float | None,
    n_claims: int | None,
) -> PathBatch:
    thetas = model.sample_theta(rng, n)
    if n_claims is not None:
        if n_claims > RUNAWAY_CAP:
            raise RunawaySimulationError(f"claim count {n_claims} exceeds cap {RUNAWAY_CAP}")
        w = model.kernel.sample(thetas, n_claims, rng)
        arrivals = np.cumsum(w, axis=1).ravel()
        offsets = np.arange(n + 1) * n_claims
        horizons = arrivals.reshape(n, n_claims)[:, -1] if n_claims else np.zeros(n)
        stop = "count"
    else:
        assert horizon is not None
        means = model.kernel.mean(thetas)
        last = np.zeros(n)
        counts = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        pieces_pid, pieces_t = [], []
        while active.size:
            remaining = (horizon - last[active]) / means[active]
            m = int(np.clip(np.ceil(1.15 * np.quantile(remaining, 0.9)) + 4, 4, 100_000))
            w = model.kernel.sample(thetas[active], m, rng)
            times = last[active, None] + np.cumsum(w, axis=1)
            pieces_pid.append(np.repeat(active, m))
            pieces_t.append(times.ravel())
            last[active] = times[:, -1]
            counts[active] += m
            if np.any(counts > RUNAWAY_CAP):
                raise RunawaySimulationError(f"a path exceeded {RUNAWAY_CAP} claims before the horizon")
            active = active[last[active] <= horizon]
        pid = np.concatenate(pieces_pid) if pieces_pid else np.zeros(0, dtype=np.int64)
        times = np.concatenate(pieces_t) if pieces_t else np.zeros(0)
        order = np.lexsort((times, pid))
        pid, times = pid[order], times[order]
        first = np.ones(pid.size, dtype=bool)
        first[1:] = pid[1:] != pid[:-1]
        prev = np.where(first, 0.0, np.roll(times, 1))
        keep = prev <= horizon
        pid, arrivals = pid[keep], times[keep]
        offsets = np.concatenate([[0], np.cumsum(np.bincount(pid, minlength=n))])
        horizons = np.full(n, float(horizon))
        stop = "horizon"
    claims = np.asarray(model.claims.sample(rng, arrivals.size), dtype=float).reshape(-1)
    return PathBatch(thetas, arrivals, claims, offsets, horizons, stop)


def _stop_args(horizon, n_claims):
    if (horizon is None) == (n_claims is None):
        raise ConstraintError("give exactly one stopping rule: horizon or n_claims")
    if horizon is not None and not horizon > 0:
        raise ConstraintError("horizon must be positive")
    if n_claims is not None and int(n_claims) < 1:
        raise ConstraintError("n_claims must be at least 1")


def simulate_path(
    model: RiskModel,
    rng: np.random.Generator,
    horizon: float | None = None,
    n_claims: int | None = None,
) -> Path:
    """Simulate one path, stopping past ``horizon`` or after ``n_claims`` claims."""
    _stop_args(horizon, n_claims)
    return _simulate_block(model, 1, rng, horizon, n_claims).path(0)


def simulate_batch(
    model: RiskModel,
    n: int,
    seed: int,
    horizon: float | None = None,
    n_claims: int | None = None,
    threads: int = 1,
) -> PathBatch:
    """Simulate ``n`` paths on block substreams derived from ``seed``."""
    _stop_args(horizon, n_claims)
    if n < 1:
        raise ConstraintError("need at least one path")
    parts = map_blocks(lambda i, m, rng: _simulate_block(model, m, rng, horizon, n_claims), n, seed, threads)
    return PathBatch.concat(parts)


def count_at(path: Path, t: float) -> int:
    return path.count_at(t)


def aggregate_at(path: Path, t: float) -> float:
    return path.aggregate_at(t)
