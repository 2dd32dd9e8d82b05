"""Change of measure turning a compound mixed renewal process into a
compound mixed Poisson process.

A :class:`Tilt` carries the claim log-density ratio ``gamma``, the target
Poisson rate ``rho(theta)`` and the mixing density ratio ``xi(theta)``.
The exponent on the mixing side is ``alpha(theta) = ln rho(theta) +
ln E[W_1 | theta]``; supplying ``alpha`` explicitly overrides that link and is
only meant for mutation testing.

The likelihood ratio on ``F_t`` is evaluated in log space::

    ln M_t = ln xi(theta) + sum_{j<=N_t} [gamma(X_j) + alpha(theta)]
             - rho (t - T_{N_t}) - N_t ln(rho E[W_1|theta])
             - ln(1 - K(theta)(t - T_{N_t}))
             + sum_{j<=N_t} ln[rho e^{-rho W_j} / k_theta(W_j)]

The fixed-theta density is the same evaluator run on a degenerate-mixing model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from . import dist
from .dist import Law
from .errors import (
    ConfigurationError,
    ConstraintError,
    SingularDensityError,
    ValidationInconclusiveError,
)
from .model import Kernel, Path, PathBatch, RateKernel, RiskModel, theta_grid, theta_rows
from .numerics import expect, neumaier_columns, padded

ArrayFn = Callable[[np.ndarray], np.ndarray]


def _zeros_like_rows(rows):
    return np.zeros(np.atleast_2d(rows).shape[0])


def _ones_like_rows(rows):
    return np.ones(np.atleast_2d(rows).shape[0])


@dataclass(frozen=True)
class Tilt:
    gamma: ArrayFn = field(compare=False)
    rho: ArrayFn = field(compare=False)
    xi: ArrayFn = field(compare=False)
    log_xi: ArrayFn | None = field(default=None, compare=False)
    alpha: ArrayFn | None = field(default=None, compare=False)
    q_claims: Law | None = None
    q_mixing: Law | None = None
    q_kernel: Kernel | None = None
    xi_is_one: bool = False
    claims_envelope: float | None = None
    mixing_envelope: float | None = None
    ell: int | None = None
    name: str = "custom"
    params: dict[str, Any] = field(default_factory=dict, compare=False)
    xi_monotone: str | None = None
    q_premium_monotone: str | None = None

    def ln_xi(self, rows) -> np.ndarray:
        rows = np.atleast_2d(rows)
        if self.log_xi is not None:
            return np.asarray(self.log_xi(rows), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.xi(rows), dtype=float))


# -- alpha / rho link -------------------------------------------------------------


def alpha_from_rho(model: RiskModel, rho: ArrayFn, theta) -> Any:
    """``alpha(theta) = ln rho(theta) + ln E[W_1 | theta]``."""
    rows = theta_rows(theta, model.dim)
    out = np.log(np.asarray(rho(rows), dtype=float)) + np.log(model.kernel.mean(rows))
    return float(out[0]) if np.ndim(theta) <= 1 and rows.shape[0] == 1 else out


def rho_from_alpha(model: RiskModel, alpha: ArrayFn, theta) -> Any:
    """Inverse link: ``rho(theta) = exp(alpha(theta)) / E[W_1 | theta]``."""
    rows = theta_rows(theta, model.dim)
    out = np.exp(np.asarray(alpha(rows), dtype=float)) / model.kernel.mean(rows)
    return float(out[0]) if np.ndim(theta) <= 1 and rows.shape[0] == 1 else out


def _alpha_and_log_rho_mean(model: RiskModel, tilt: Tilt, rows: np.ndarray):
    rho = np.asarray(tilt.rho(rows), dtype=float)
    ln_rho_mean = np.log(rho) + np.log(model.kernel.mean(rows))
    alpha = ln_rho_mean if tilt.alpha is None else np.asarray(tilt.alpha(rows), dtype=float)
    return rho, alpha, ln_rho_mean


# -- validation -------------------------------------------------------------------


@dataclass
class TiltValidation:
    ell: int
    e_exp_gamma: float
    e_x_ell_exp_gamma: float
    e_xi: float
    e_xi_rate_ell: float
    tol: float
    method: str
    xi_positive_on_grid: bool
    passed: bool
    messages: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def validate_tilt(
    model: RiskModel,
    tilt: Tilt,
    ell: int | None = None,
    tol: float | None = None,
    method: str = "quad",
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> TiltValidation:
    """Check ``E[e^gamma] = 1``, ``E[xi] = 1`` and the integrability conditions.

    Raises :class:`ValidationInconclusiveError` when quadrature does not
    converge; that is distinct from a failed check.
    """

    def claim_mean(fn):
        if method == "mc":
            x = np.asarray(model.claims.sample(np.random.default_rng(seed), mc_samples), dtype=float)
            return float(np.mean(fn(x)))
        return expect(model.claims, fn)[0]

    def mixing_mean(fn):
        if method == "mc":
            rows = model.sample_theta(np.random.default_rng(seed + 1), mc_samples)
            return float(np.mean(fn(rows)))
        return expect(model.mixing, lambda ys: fn(theta_rows(ys, model.dim) if model.dim == 1 else ys))[0]

    if tol is None:
        tol = 1e-6 if method == "quad" else 1e-3

    def eg(x):
        return np.exp(tilt.gamma(np.asarray(x, dtype=float)))

    e_exp = claim_mean(eg)
    msgs: list[str] = []
    if ell is None:
        try:
            m2 = claim_mean(lambda x: np.asarray(x) ** 2 * eg(x))
            ell = 2 if math.isfinite(m2) else 1
        except ValidationInconclusiveError:
            ell = 1
            msgs.append("second tilted moment not finite numerically; using ell=1")
    m_ell = claim_mean(lambda x: np.asarray(x) ** ell * eg(x))

    def rate_ell(rows):
        rho, alpha, _ = _alpha_and_log_rho_mean(model, tilt, rows)
        rate = np.exp(alpha) / model.kernel.mean(rows)
        return np.asarray(tilt.xi(rows), dtype=float) * rate**ell

    e_xi = mixing_mean(lambda rows: np.asarray(tilt.xi(rows), dtype=float))
    e_rate = mixing_mean(rate_ell)
    grid = theta_grid(model.mixing, 64)
    xi_pos = bool(np.all(np.asarray(tilt.xi(grid)) > 0))

    ok = True
    if not abs(e_exp - 1.0) <= tol:
        ok = False
        msgs.append(f"E[exp(gamma(X))] = {e_exp!r} differs from 1")
    if not abs(e_xi - 1.0) <= tol:
        ok = False
        msgs.append(f"E[xi(Theta)] = {e_xi!r} differs from 1")
    if not (math.isfinite(m_ell) and math.isfinite(e_rate)):
        ok = False
        msgs.append("integrability condition fails")
    if not xi_pos:
        ok = False
        msgs.append("xi is not positive on the mixing grid")
    return TiltValidation(ell, e_exp, m_ell, e_xi, e_rate, tol, method, xi_pos, ok, msgs)


# -- density evaluation ------------------------------------------------------------


def log_density(model: RiskModel, tilt: Tilt, path: Path, t: float) -> float:
    """``ln M_t`` for a single path, summed with ``math.fsum``."""
    n = path.count_at(t)
    rows = theta_rows(path.theta, model.dim)
    rho_a, alpha_a, lrm_a = _alpha_and_log_rho_mean(model, tilt, rows)
    rho, alpha, lrm = float(rho_a[0]), float(alpha_a[0]), float(lrm_a[0])
    w = path.interarrivals[:n]
    x = path.claims[:n]
    resid = t - (float(path.arrivals[n - 1]) if n else 0.0)
    k_log = model.kernel.logpdf(w, np.repeat(rows, n, axis=0)) if n else np.zeros(0)
    if np.any(~np.isfinite(k_log)):
        raise SingularDensityError("kernel density vanishes at an observed interarrival time")
    log_sf = float(model.kernel.logsf(np.array([resid]), rows)[0])
    if not math.isfinite(log_sf):
        raise SingularDensityError("kernel survival vanishes at the residual time")
    g = np.asarray(tilt.gamma(x), dtype=float)
    ratio = dist.exp_logpdf(w, rho) - k_log
    terms = [
        float(tilt.ln_xi(rows)[0]),
        math.fsum(g),
        n * alpha - n * lrm,
        -rho * resid - log_sf,
        math.fsum(ratio),
    ]
    return math.fsum(terms)


def log_density_reduced(model: RiskModel, tilt: Tilt, path: Path, t: float) -> float:
    """Same density arranged as a Poisson-over-renewal likelihood ratio.

    ``ln xi + sum gamma + (N ln rho - rho t) - (sum ln k(W_j) + ln(1 - K(r)))
    + N (alpha - ln(rho E[W|theta]))``; used to guard the main evaluator.
    """
    n = path.count_at(t)
    rows = theta_rows(path.theta, model.dim)
    rho_a, alpha_a, lrm_a = _alpha_and_log_rho_mean(model, tilt, rows)
    rho = float(rho_a[0])
    w = path.interarrivals[:n]
    resid = t - (float(path.arrivals[n - 1]) if n else 0.0)
    renewal_ll = math.fsum(model.kernel.logpdf(w, np.repeat(rows, n, axis=0))) if n else 0.0
    renewal_ll += float(model.kernel.logsf(np.array([resid]), rows)[0])
    poisson_ll = n * math.log(rho) - rho * t
    return math.fsum(
        [
            float(tilt.ln_xi(rows)[0]),
            math.fsum(np.asarray(tilt.gamma(path.claims[:n]), dtype=float)),
            poisson_ll,
            -renewal_ll,
            n * (float(alpha_a[0]) - float(lrm_a[0])),
        ]
    )


def log_density_batch(model: RiskModel, tilt: Tilt, batch: PathBatch, t: float) -> np.ndarray:
    """Vectorized ``ln M_t`` for every path of a batch (compensated sums)."""
    counts = batch.counts_at(t)
    rows = batch.thetas
    rho, alpha, lrm = _alpha_and_log_rho_mean(model, tilt, rows)
    starts = batch.offsets[:-1]
    arr = padded(batch.arrivals, starts, counts, fill=np.nan)
    x = padded(batch.claims, starts, counts, fill=np.nan)
    mask = np.isfinite(arr)
    w = np.diff(np.where(mask, arr, 0.0), axis=1, prepend=0.0)
    last = batch.last_arrivals_at(t, counts)
    resid = t - last

    rep_rows = np.repeat(rows, counts, axis=0)
    k_log_flat = model.kernel.logpdf(w[mask], rep_rows) if counts.sum() else np.zeros(0)
    if np.any(~np.isfinite(k_log_flat)):
        raise SingularDensityError("kernel density vanishes at an observed interarrival time")
    rho_rep = np.repeat(rho, counts)
    ratio = np.zeros_like(w)
    ratio[mask] = dist.exp_logpdf(w[mask], rho_rep) - k_log_flat
    g = np.zeros_like(w)
    g[mask] = np.asarray(tilt.gamma(x[mask]), dtype=float)

    log_sf = model.kernel.logsf(resid, rows)
    if np.any(~np.isfinite(log_sf)):
        raise SingularDensityError("kernel survival vanishes at the residual time")
    terms = np.column_stack(
        [
            tilt.ln_xi(rows),
            neumaier_columns(g),
            counts * alpha - counts * lrm,
            -rho * resid - log_sf,
            neumaier_columns(ratio),
        ]
    )
    return neumaier_columns(terms)


# -- Q model -------------------------------------------------------------------------


def q_model(model: RiskModel, tilt: Tilt) -> RiskModel:
    """Risk model under Q: tilted claims and mixing law, exponential kernel with rate rho."""
    if tilt.q_claims is not None:
        claims = tilt.q_claims
    elif tilt.claims_envelope is not None:
        claims = dist.TiltedLaw(model.claims, tilt.gamma, tilt.claims_envelope)
    else:
        raise ConfigurationError("tilt has no closed-form Q claim law and no rejection envelope")
    if tilt.q_mixing is not None:
        mixing = tilt.q_mixing
    elif tilt.xi_is_one:
        mixing = model.mixing
    elif tilt.mixing_envelope is not None:
        mixing = dist.TiltedLaw(model.mixing, lambda ys: tilt.ln_xi(theta_rows(ys, model.dim)), tilt.mixing_envelope)
    else:
        raise ConfigurationError("tilt has no closed-form Q mixing law and no rejection envelope")
    kernel = tilt.q_kernel if tilt.q_kernel is not None else RateKernel(tilt.rho, model.dim, label=tilt.name)
    return RiskModel(mixing, kernel, claims)


# -- builders ---------------------------------------------------------------------------


def identity_tilt(model: RiskModel) -> Tilt:
    """The trivial change of measure on a model with an exponential kernel."""
    if not model.kernel.is_exponential():
        raise ConstraintError("the identity tilt needs an exponential kernel")
    return Tilt(
        gamma=lambda x: np.zeros(np.shape(x)),
        rho=model.kernel.rate,
        xi=_ones_like_rows,
        log_xi=_zeros_like_rows,
        q_claims=model.claims,
        q_mixing=model.mixing,
        q_kernel=model.kernel,
        xi_is_one=True,
        name="identity",
        xi_monotone="constant",
    )


def _unit_rate(model: RiskModel) -> ArrayFn:
    # alpha = 0  <=>  rho = 1 / E[W_1 | theta]
    return lambda rows: 1.0 / model.kernel.mean(rows)


def esscher_gamma(model: RiskModel, c: float) -> Tilt:
    """Esscher claim tilt ``gamma(x) = c x - ln E[e^{c X_1}]`` with ``alpha = 0``, ``xi = 1``."""
    mgf = model.claims.mgf(c)
    if not math.isfinite(mgf):
        raise ConstraintError(f"E[exp({c} X_1)] is infinite; the Esscher tilt does not exist")
    log_mgf = math.log(mgf)
    claims = model.claims
    if c == 0:
        q_claims: Law | None = claims
    elif isinstance(claims, dist.Exponential):
        q_claims = dist.Exponential(claims.rate - c)
    elif isinstance(claims, dist.Gamma):
        q_claims = dist.Gamma(claims.rate - c, claims.shape)
    else:
        q_claims = None
    envelope = None
    lo, hi = claims.support()
    if q_claims is None and math.isfinite(hi):
        envelope = math.exp(max(c * hi, c * lo) - log_mgf)
    return Tilt(
        gamma=lambda x: c * np.asarray(x, dtype=float) - log_mgf,
        rho=_unit_rate(model),
        xi=_ones_like_rows,
        log_xi=_zeros_like_rows,
        q_claims=q_claims,
        xi_is_one=True,
        claims_envelope=envelope,
        name="esscher",
        params={"c": c},
        xi_monotone="constant",
    )


def example1_tilt(zeta: float, c: float) -> Tilt:
    """Claims Ga(zeta, 2), hyperexponential kernel on (1, inf)^2, ``c > 2``.

    ``gamma(x) = ln(E[X_1]/(2c)) - ln x + 2(c-1) x / (c E[X_1])``, ``alpha = 0``
    so ``rho = 2/(theta_1 + theta_2)``, ``xi = 1``. Q claims are ``Exp(zeta/c)``.
    """
    if not zeta > 0:
        raise ConstraintError("example 1 needs zeta > 0")
    if not c > 2:
        raise ConstraintError(f"example 1 needs a constant c > 2 (got c={c})")
    mean_x = 2.0 / zeta
    k0 = math.log(mean_x / (2.0 * c))
    slope = 2.0 * (c - 1.0) / (c * mean_x)

    def gamma(x):
        x = np.asarray(x, dtype=float)
        return k0 - np.log(x) + slope * x

    return Tilt(
        gamma=gamma,
        rho=lambda rows: 2.0 / (np.atleast_2d(rows)[:, 0] + np.atleast_2d(rows)[:, 1]),
        xi=_ones_like_rows,
        log_xi=_zeros_like_rows,
        q_claims=dist.Exponential(zeta / c),
        xi_is_one=True,
        ell=2,
        name="example1",
        params={"zeta": zeta, "c": c},
        xi_monotone="constant",
    )


def example2_tilt(
    k: float,
    eta: float,
    c: float,
    d: float,
    b1: float,
    b2: float,
    a: float,
    counterexample: bool = False,
) -> Tilt:
    """Gamma kernel Ga(theta, k), claims Exp(eta), mixing Ga(b1, a).

    ``gamma(x) = ln(1 - c/eta) + c x``, ``rho(theta) = theta/d`` (so
    ``alpha = ln(k/d)``), ``xi(theta) = (b2/b1)^a e^{-(b2-b1) theta}``.
    With ``counterexample=True`` the parameters must satisfy ``c = 0`` and
    ``b2 > b1 k / d`` instead of ``b2 < b1``.
    """
    for name, v in (("k", k), ("eta", eta), ("d", d), ("b1", b1), ("b2", b2), ("a", a)):
        if not v > 0:
            raise ConstraintError(f"example 2 needs {name} > 0")
    if not 0 <= c < eta:
        raise ConstraintError(f"example 2 needs 0 <= c < eta (got c={c}, eta={eta})")
    if not d < k:
        raise ConstraintError(f"example 2 needs d < k (got d={d}, k={k})")
    if counterexample:
        if c != 0:
            raise ConstraintError("the counterexample needs c = 0")
        if not b2 > b1 * k / d:
            raise ConstraintError(f"the counterexample needs b2 > b1*k/d = {b1 * k / d}")
    elif not b2 < b1:
        raise ConstraintError(f"example 2 needs b2 < b1 (got b2={b2}, b1={b1})")
    log_scale = a * math.log(b2 / b1)
    lg0 = math.log1p(-c / eta)

    def log_xi(rows):
        return log_scale - (b2 - b1) * np.atleast_2d(rows)[:, 0]

    return Tilt(
        gamma=lambda x: lg0 + c * np.asarray(x, dtype=float),
        rho=lambda rows: np.atleast_2d(rows)[:, 0] / d,
        xi=lambda rows: np.exp(log_xi(rows)),
        log_xi=log_xi,
        q_claims=dist.Exponential(eta - c),
        q_mixing=dist.Gamma(b2, a),
        ell=2,
        name="example2-cou" if counterexample else "example2",
        params={"k": k, "eta": eta, "c": c, "d": d, "b1": b1, "b2": b2, "a": a},
        xi_monotone="increasing" if b2 < b1 else ("decreasing" if b2 > b1 else "constant"),
        q_premium_monotone="increasing",
    )


def _wang_q_claims(claims: Law, c: float) -> Law:
    if isinstance(claims, dist.Uniform) and claims.lo == 0.0 and claims.hi == 1.0:
        return dist.Beta(1.0, 1.0 / c)
    if isinstance(claims, dist.Beta) and claims.p == 1.0:
        return dist.Beta(1.0, claims.q / c)
    if isinstance(claims, dist.Exponential):
        return dist.Exponential(claims.rate / c)
    return dist.PowerSurvival(claims, 1.0 / c)


def wang_tilt(model: RiskModel, c: float) -> Tilt:
    """Claim tilt reproducing the risk-adjusted premium: Q survival is ``sf(x)**(1/c)``.

    ``gamma(x) = -ln c + (1/c - 1) ln sf(x)``; ``alpha = 0``, ``xi = 1``.
    ``c = 1`` would be the identity on claims and is rejected.
    """
    if not c > 1:
        raise ConstraintError(f"the risk-adjusted premium tilt needs c > 1 (got c={c})")
    claims = model.claims
    lc = math.log(c)
    expo = 1.0 / c - 1.0

    def gamma(x):
        return -lc + expo * np.asarray(claims.logsf(np.asarray(x, dtype=float)), dtype=float)

    return Tilt(
        gamma=gamma,
        rho=_unit_rate(model),
        xi=_ones_like_rows,
        log_xi=_zeros_like_rows,
        q_claims=_wang_q_claims(claims, c),
        xi_is_one=True,
        name="wang",
        params={"c": c},
        xi_monotone="constant",
        q_premium_monotone="increasing" if model.kernel.is_exponential() else None,
    )


def exp_mixing_xi(model: RiskModel, r: float) -> Tilt:
    """Mixing tilt ``xi(theta) = e^{r theta} / E[e^{r Theta}]`` with identity claims part."""
    if model.dim != 1:
        raise ConstraintError("the exponential mixing tilt is one-dimensional")
    mgf = model.mixing.mgf(r)
    if not (math.isfinite(mgf) and mgf > 0):
        raise ConstraintError(f"E[exp({r} Theta)] is not finite")
    lm = math.log(mgf)
    mixing = model.mixing
    if isinstance(mixing, dist.Gamma):
        q_mixing: Law | None = dist.Gamma(mixing.rate - r, mixing.shape)
    elif isinstance(mixing, dist.Exponential):
        q_mixing = dist.Exponential(mixing.rate - r)
    else:
        q_mixing = None
    lo, hi = mixing.support()
    envelope = math.exp(max(r * hi, r * lo) - lm) if q_mixing is None and math.isfinite(hi) else None

    def log_xi(rows):
        return r * np.atleast_2d(rows)[:, 0] - lm

    return Tilt(
        gamma=lambda x: np.zeros(np.shape(x)),
        rho=_unit_rate(model),
        xi=lambda rows: np.exp(log_xi(rows)),
        log_xi=log_xi,
        q_claims=model.claims,
        q_mixing=q_mixing,
        mixing_envelope=envelope,
        name="exp-mixing",
        params={"r": r},
        xi_monotone="increasing" if r > 0 else ("decreasing" if r < 0 else "constant"),
    )


def compose(claims_part: Tilt, mixing_part: Tilt, name: str | None = None) -> Tilt:
    """Claims and rate components of ``claims_part`` with the mixing tilt of ``mixing_part``."""
    return replace(
        claims_part,
        xi=mixing_part.xi,
        log_xi=mixing_part.log_xi,
        q_mixing=mixing_part.q_mixing,
        xi_is_one=mixing_part.xi_is_one,
        mixing_envelope=mixing_part.mixing_envelope,
        xi_monotone=mixing_part.xi_monotone,
        name=name or f"{claims_part.name}+{mixing_part.name}",
        params={**claims_part.params, **mixing_part.params},
    )


def perturb(model: RiskModel, tilt: Tilt, alpha_shift: float = 0.0, xi_scale: float = 1.0) -> Tilt:
    """Deliberately wrong density (for mutation tests); the Q-side laws are left intact."""
    base_alpha = tilt.alpha

    def alpha(rows):
        if base_alpha is not None:
            return base_alpha(rows) + alpha_shift
        return alpha_from_rho(model, tilt.rho, np.atleast_2d(rows)) + alpha_shift

    base_log_xi = tilt.ln_xi
    ls = math.log(xi_scale)
    return replace(
        tilt,
        alpha=alpha if alpha_shift else tilt.alpha,
        xi=lambda rows: np.exp(base_log_xi(rows) + ls),
        log_xi=lambda rows: base_log_xi(rows) + ls,
        name=f"{tilt.name}[mutated]",
    )
