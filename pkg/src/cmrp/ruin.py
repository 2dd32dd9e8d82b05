"""Reserve process, net profit analysis and ruin probabilities.

The reserve is ``u + c(theta) t - S_t``. Ruin is the first claim epoch with a
strictly negative reserve. ``ruin_prob_is`` simulates under a tilted measure
where ruin is almost sure and averages ``1 / M_tau`` over ruined paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import dist
from .diagnostics import Estimate
from .errors import ConstraintError, DomainError, UnreliableEstimateError
from .model import Path, RiskModel, _simulate_block, theta_grid, theta_rows
from .numerics import expect
from .premium import conditional_premium_density, q_premium
from .streams import map_blocks
from .tilt import Tilt, _alpha_and_log_rho_mean, log_density, q_model

PremiumFn = Callable[[np.ndarray], np.ndarray]

# the generic evaluator recomputes alpha and the kernel terms per claim, so on long
# ruined paths its rounding differs from the running sums by many ulps
VERIFY_RTOL = 1e-7


@dataclass(frozen=True)
class RuinSpec:
    """Initial reserve(s), premium rate function and simulation budget."""

    u: float | tuple[float, ...]
    c: PremiumFn = field(compare=False)
    max_claims: int = 100_000
    n_paths: int = 100_000
    horizon: float | None = None

    def __post_init__(self):
        us = self.u_grid
        if not us or any(not (v > 0 and math.isfinite(v)) for v in us):
            raise ConstraintError("initial reserves must be positive and finite")
        if int(self.max_claims) < 1:
            raise ConstraintError("max_claims must be at least 1")
        if int(self.n_paths) < 1:
            raise ConstraintError("need at least one path")
        if self.horizon is not None and not self.horizon > 0:
            raise ConstraintError("horizon must be positive")

    @property
    def u_grid(self) -> tuple[float, ...]:
        return tuple(float(v) for v in np.atleast_1d(self.u))

    def rate(self, theta) -> np.ndarray:
        return np.asarray(self.c(np.atleast_2d(theta)), dtype=float).reshape(-1)


@dataclass
class RuinResult:
    u: float
    estimate: Estimate
    ruined: int
    truncated: int
    method: str
    oracle: float | None = None
    note: str = ""

    @property
    def psi(self) -> float:
        return self.estimate.value

    @property
    def stderr(self) -> float:
        return self.estimate.stderr

    def row(self) -> dict[str, Any]:
        return {
            "u": self.u,
            "psi_hat": self.psi,
            "stderr": self.stderr,
            "n": self.estimate.n,
            "ruined": self.ruined,
            "truncated": self.truncated,
            "oracle": "" if self.oracle is None else self.oracle,
        }


# -- single path mechanics -------------------------------------------------------------


def reserve_at(path: Path, spec: RuinSpec, t: float, u: float | None = None) -> float:
    """``u + c(theta) t - S_t``."""
    u0 = spec.u_grid[0] if u is None else float(u)
    c = float(spec.rate(theta_rows(path.theta))[0])
    return u0 + c * t - path.aggregate_at(t)


def ruin_time(path: Path, spec: RuinSpec, u: float | None = None) -> float | None:
    """First arrival epoch with strictly negative reserve, or ``None``."""
    u0 = spec.u_grid[0] if u is None else float(u)
    c = float(spec.rate(theta_rows(path.theta))[0])
    n = min(path.arrivals.size, int(spec.max_claims))
    if n == 0:
        return None
    reserve = u0 + c * path.arrivals[:n] - np.cumsum(path.claims[:n])
    hit = np.flatnonzero(reserve < 0)
    return float(path.arrivals[hit[0]]) if hit.size else None


@dataclass
class NetProfitReport:
    grid: np.ndarray
    margins: np.ndarray
    min_margin: float
    max_margin: float
    classification: str  # "VIOLATED-a.s.", "SATISFIED-a.s." or "MIXED"


def net_profit_report(model: RiskModel, c: PremiumFn | RuinSpec, grid: np.ndarray | None = None) -> NetProfitReport:
    """Margins ``c(theta) - p(P, theta)`` over a quantile grid of the mixing law."""
    fn = c.rate if isinstance(c, RuinSpec) else c
    if grid is None:
        grid = theta_grid(model.mixing, 64)
    pp = np.asarray(conditional_premium_density(model, grid), dtype=float).reshape(-1)
    cc = np.broadcast_to(np.asarray(fn(grid), dtype=float), pp.shape)
    margins = cc - pp
    if np.all(margins <= 0):
        cls = "VIOLATED-a.s."
    elif np.all(margins > 0):
        cls = "SATISFIED-a.s."
    else:
        cls = "MIXED"
    return NetProfitReport(grid, margins, float(margins.min()), float(margins.max()), cls)


# -- estimators -----------------------------------------------------------------------


def _estimate(values: np.ndarray, seed: int, truncated: int = 0) -> Estimate:
    n = values.size
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if n > 1 else math.inf
    return Estimate(mean, sd / math.sqrt(n), n, truncated, seed)


def ruin_prob_crude(model: RiskModel, spec: RuinSpec, seed: int, threads: int = 1) -> list[RuinResult]:
    """Fraction of P-paths ruined by ``spec.horizon`` (a lower bound on the infinite-horizon value)."""
    if spec.horizon is None:
        raise ConstraintError("the crude estimator needs a finite horizon")
    us = np.array(spec.u_grid)

    def block(i, m, rng):
        b = _simulate_block(model, m, rng, spec.horizon, None)
        counts = b.counts_at(spec.horizon)
        c = spec.rate(b.thetas)
        # running minimum of c T_j - S_j per path, over arrivals up to the horizon
        mins = np.full(m, np.inf)
        starts = b.offsets[:-1]
        pid = np.repeat(np.arange(m), counts)
        if pid.size:
            idx = np.concatenate([np.arange(s, s + k) for s, k in zip(starts, counts)])
            arr = b.arrivals[idx]
            cs = np.cumsum(b.claims[idx])
            seg0 = np.concatenate([[0], np.cumsum(counts)[:-1]])
            base = np.where(seg0 > 0, cs[np.maximum(seg0 - 1, 0)], 0.0)
            s_path = cs - np.repeat(base, counts)
            d = c[pid] * arr - s_path
            np.minimum.at(mins, pid, d)
        return (mins[:, None] < -us[None, :]).astype(float)

    hits = np.concatenate(map_blocks(block, int(spec.n_paths), seed, threads, salt=0xC0DE))
    out = []
    for j, u in enumerate(us):
        est = _estimate(hits[:, j], seed)
        out.append(RuinResult(float(u), est, int(hits[:, j].sum()), 0, "crude",
                              note=f"finite horizon {spec.horizon}: lower bound on the infinite-horizon value"))
    return out


@dataclass
class _ISBlock:
    log_w_a: np.ndarray  # (m, U): -ln M_tau, NaN where not ruined
    log_w_b: np.ndarray  # (m, U): literal product form
    records: list[tuple[np.ndarray, np.ndarray, np.ndarray, float]]  # (theta, W, X, -ln M_tau) at the largest u


def _kahan_add(s: np.ndarray, comp: np.ndarray, v: np.ndarray) -> None:
    t = s + v
    big = np.abs(s) >= np.abs(v)
    comp += np.where(big, (s - t) + v, (v - t) + s)
    s[...] = t


class _Acc:
    """Per-path compensated running sums."""

    def __init__(self, m: int):
        self.s = np.zeros(m)
        self.comp = np.zeros(m)

    def value(self, idx):
        return self.s[idx] + self.comp[idx]

    def add(self, idx, v):
        s, comp = self.s[idx], self.comp[idx]
        _kahan_add(s, comp, v)
        self.s[idx], self.comp[idx] = s, comp


def _is_block(model, tilt, qm, us, c_fn, max_claims, record, m, rng) -> _ISBlock:
    thetas = qm.sample_theta(rng, m)
    c = c_fn(thetas)
    rho, alpha, lrm = _alpha_and_log_rho_mean(model, tilt, thetas)
    ln_xi = tilt.ln_xi(thetas)
    log_rho = np.log(rho)
    n_u = us.size
    jmax = int(np.argmax(us))

    N = np.zeros(m, dtype=np.int64)
    acc_g, acc_l, acc_t, acc_s = _Acc(m), _Acc(m), _Acc(m), _Acc(m)
    log_a = np.full((m, n_u), np.nan)
    log_b = np.full((m, n_u), np.nan)
    n_ruin = np.zeros((m, n_u), dtype=np.int64)
    done = np.zeros((m, n_u), dtype=bool)
    n_rec = min(record, m)
    rec_w: list[list[np.ndarray]] = [[] for _ in range(n_rec)]
    rec_x: list[list[np.ndarray]] = [[] for _ in range(n_rec)]
    active = np.arange(m)
    step = 32
    while active.size:
        k = int(min(step, max_claims - N[active].max()))
        na = active.size
        w = rng.exponential(1.0, size=(na, k)) / rho[active, None]
        x = np.asarray(qm.claims.sample(rng, na * k), dtype=float).reshape(na, k)
        g = np.asarray(tilt.gamma(x), dtype=float)
        lk = model.kernel.logpdf(w.ravel(), np.repeat(thetas[active], k, axis=0)).reshape(na, k)
        for j in np.flatnonzero(active < n_rec):
            rec_w[active[j]].append(w[j])
            rec_x[active[j]].append(x[j])
        cum_g = np.cumsum(g, axis=1)
        cum_l = np.cumsum(lk, axis=1)
        cum_t = np.cumsum(w, axis=1)
        cum_s = np.cumsum(x, axis=1)
        # c T_j - S_j at every arrival of the chunk
        d = c[active, None] * (acc_t.value(active)[:, None] + cum_t) - (acc_s.value(active)[:, None] + cum_s)
        dmin = d.min(axis=1)
        for jj in range(n_u):
            hit = ~done[active, jj] & (dmin < -us[jj])
            if not np.any(hit):
                continue
            ri = np.flatnonzero(hit)
            first = np.argmax(d[ri] < -us[jj], axis=1)
            pi = active[ri]
            g_tau = acc_g.value(pi) + cum_g[ri, first]
            l_tau = acc_l.value(pi) + cum_l[ri, first]
            tau = acc_t.value(pi) + cum_t[ri, first]
            n_tau = N[pi] + first + 1
            r, lr = rho[pi], log_rho[pi]
            # density at tau: residual time is 0, so the survival term vanishes
            log_m = ln_xi[pi] + g_tau + n_tau * (alpha[pi] - lrm[pi]) + (n_tau * lr - r * tau - l_tau)
            log_a[pi, jj] = -log_m
            # literal form: (1/xi) exp(-S^beta + N alpha) prod dK/dExp(rho)(W_j), S^beta = sum gamma + N alpha
            s_beta = g_tau + n_tau * alpha[pi]
            log_b[pi, jj] = -ln_xi[pi] - s_beta + n_tau * alpha[pi] + (l_tau - n_tau * lr + r * tau)
            n_ruin[pi, jj] = n_tau
            done[pi, jj] = True
        acc_g.add(active, cum_g[:, -1])
        acc_l.add(active, cum_l[:, -1])
        acc_t.add(active, cum_t[:, -1])
        acc_s.add(active, cum_s[:, -1])
        N[active] += k
        active = active[~done[active, jmax] & (N[active] < max_claims)]
        step = min(step * 2, 4096, max(32, 4_000_000 // max(active.size, 1)))
    records = []
    for i in range(n_rec):
        if done[i, jmax]:
            cut = int(n_ruin[i, jmax])
            ws, xs = np.concatenate(rec_w[i])[:cut], np.concatenate(rec_x[i])[:cut]
            records.append((thetas[i], ws, xs, float(log_a[i, jmax])))
    return _ISBlock(log_a, log_b, records)


def enforced_premium(model: RiskModel, tilt: Tilt) -> PremiumFn:
    """The premium rate ``c(theta) = p(Q, theta)`` required by the importance-sampling identity."""
    return lambda rows: np.asarray(q_premium(model, tilt, np.atleast_2d(rows)), dtype=float).reshape(-1)


def ruin_prob_is(
    model: RiskModel,
    tilt: Tilt,
    u: float | Sequence[float],
    n_paths: int = 100_000,
    max_claims: int = 100_000,
    seed: int = 0,
    threads: int = 1,
    premium: PremiumFn | None = None,
    verify: int = 0,
    weight_rtol: float = 1e-10,
    oracle: Callable[[float], float] | None = None,
) -> list[RuinResult]:
    """Infinite-horizon ruin probabilities on a grid of initial reserves.

    Paths are drawn once under Q (from ``q_model``) and followed until ruin
    at the largest ``u`` or ``max_claims``. Each ruined path contributes
    ``1 / M_tau`` and truncated paths contribute 0, so the estimate is a lower
    bound when truncation occurs. ``premium`` may be supplied to assert it
    equals ``p(Q, theta)``; any other rate is rejected. ``verify > 0``
    re-evaluates the density on that many reconstructed ruined paths with the
    general path evaluator.
    """
    spec = RuinSpec(tuple(np.atleast_1d(u)), enforced_premium(model, tilt), max_claims, n_paths)
    c_fn = spec.c
    grid = theta_grid(model.mixing, 16)
    if premium is not None:
        want = c_fn(grid)
        got = np.asarray(premium(grid), dtype=float).reshape(-1)
        if not np.allclose(got, want, rtol=1e-8, atol=0):
            raise ConstraintError("the importance-sampling identity needs c(theta) = p(Q, theta)")
    qm = q_model(model, tilt)
    us = np.array(spec.u_grid)
    blocks = map_blocks(
        lambda i, m, rng: _is_block(model, tilt, qm, us, c_fn, int(max_claims), verify if i == 0 else 0, m, rng),
        int(n_paths),
        seed,
        threads,
        salt=0x15,
    )
    log_a = np.concatenate([b.log_w_a for b in blocks])
    log_b = np.concatenate([b.log_w_b for b in blocks])
    ruined = np.isfinite(log_a)
    gap = np.abs(log_a[ruined] - log_b[ruined])
    scale = np.maximum(1.0, np.abs(log_a[ruined]))
    if gap.size and np.max(gap / scale) > weight_rtol:
        raise DomainError(f"weight forms disagree by {float(np.max(gap / scale)):.3e}")
    for theta, w, x, neg_log_m in blocks[0].records:
        arrivals = np.cumsum(w)
        path = Path(theta, arrivals, x, float(arrivals[-1]), "count")
        lm = log_density(model, tilt, path, float(arrivals[-1]))
        if abs(lm + neg_log_m) > VERIFY_RTOL * max(1.0, abs(lm)):
            raise DomainError(f"path evaluator gives {lm!r}, ruin accumulator gives {-neg_log_m!r}")
    results = []
    n = log_a.shape[0]
    for jj, uu in enumerate(us):
        w = np.where(ruined[:, jj], np.exp(np.where(ruined[:, jj], log_a[:, jj], 0.0)), 0.0)
        n_ruined = int(ruined[:, jj].sum())
        trunc = n - n_ruined
        if trunc > 0.5 * n:
            raise UnreliableEstimateError(
                f"{trunc} of {n} paths reached max_claims={max_claims} without ruin at u={uu}"
            )
        est = _estimate(w, seed, trunc)
        note = "lower bound: truncated paths contribute 0" if trunc else ""
        results.append(RuinResult(float(uu), est, n_ruined, trunc, "is",
                                  None if oracle is None else float(oracle(float(uu))), note))
    return results


# -- oracles ------------------------------------------------------------------------


def cramer_lundberg_oracle(lam: float, eta: float, c: float, u: float) -> float:
    """Classical compound-Poisson ruin probability with Exp(eta) claims."""
    if not (lam > 0 and eta > 0 and u >= 0):
        raise DomainError("need lam > 0, eta > 0, u >= 0")
    if c <= lam / eta:
        return 1.0
    return lam / (c * eta) * math.exp(-(eta - lam / c) * u)


def mixed_cramer_lundberg_oracle(
    mixing: dist.Law,
    lam: Callable[[float], float],
    eta: float,
    c: Callable[[float], float],
    u: float,
) -> tuple[float, float]:
    """``int psi_theta(u) P_Theta(d theta)`` by adaptive quadrature."""

    def fn(ys):
        return np.array([cramer_lundberg_oracle(lam(float(y)), eta, c(float(y)), u) for y in np.atleast_1d(ys)])

    return expect(mixing, fn)


def mixed_oracle_for(model: RiskModel, tilt: Tilt) -> Callable[[float], float] | None:
    """Mixed Cramer-Lundberg oracle at ``c = p(Q, theta)`` when the model is
    mixed compound Poisson with exponential claims; ``None`` otherwise."""
    if not (model.kernel.is_exponential() and isinstance(model.claims, dist.Exponential) and model.dim == 1):
        return None
    eta = model.claims.rate
    c_fn = enforced_premium(model, tilt)

    def lam(th: float) -> float:
        return float(model.kernel.rate(np.array([[th]]))[0])

    def c(th: float) -> float:
        return float(c_fn(np.array([[th]]))[0])

    return lambda u: mixed_cramer_lundberg_oracle(model.mixing, lam, eta, c, u)[0]
