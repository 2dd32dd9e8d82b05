"""Monte Carlo checks of the density martingale, compensators, Wald
identities and the strong law, the exact association inequality on finite
supports, and a weighted two-sample test of path-law equivalence.

All simulation runs on block substreams (see :mod:`cmrp.streams`), so a
report is a deterministic function of its inputs and the seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from . import dist
from .errors import InconclusiveError, UnsupportedOperationError
from .model import RiskModel, _simulate_block, theta_rows
from .numerics import expect
from .streams import block_rng, map_blocks
from .tilt import Tilt, log_density_batch, q_model

Z_THRESHOLD = 3.29


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int
    truncated: int = 0
    seed: int = 0

    def ci(self, z: float = Z_THRESHOLD) -> tuple[float, float]:
        return self.value - z * self.stderr, self.value + z * self.stderr

    @classmethod
    def from_samples(cls, values: np.ndarray, seed: int = 0, truncated: int = 0) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        if n < 2:
            raise InconclusiveError("an estimate needs at least two samples")
        return cls(float(np.mean(values)), float(np.std(values, ddof=1)) / math.sqrt(n), n, truncated, seed)


@dataclass(frozen=True)
class CheckReport:
    name: str
    target: float
    estimate: Estimate
    z: float
    passed: bool
    t: float | None = None
    z_threshold: float = Z_THRESHOLD
    sided: str = "two"  # "two" for |z| <= threshold, "greater" for z > threshold

    @classmethod
    def build(cls, name, target, est, t=None, z_threshold=Z_THRESHOLD, sided="two") -> "CheckReport":
        diff = est.value - target
        if est.stderr > 0:
            z = diff / est.stderr
        else:
            z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        passed = abs(z) <= z_threshold if sided == "two" else z > z_threshold
        return cls(name, float(target), est, float(z), bool(passed), t, z_threshold, sided)

    def row(self) -> dict[str, Any]:
        return {
            "check": self.name,
            "t": "" if self.t is None else self.t,
            "value": self.estimate.value,
            "target": self.target,
            "stderr": self.estimate.stderr,
            "z": self.z,
            "pass": int(self.passed),
        }


# -- martingale and compensators ---------------------------------------------------------


def _per_block(model: RiskModel, horizon: float, n: int, seed: int, threads: int, fn, salt: int = 0) -> np.ndarray:
    def work(i, m, rng):
        return fn(_simulate_block(model, m, rng, horizon, None))

    return np.concatenate(map_blocks(work, n, seed, threads, salt), axis=0)


def martingale_unit_mean(
    model: RiskModel,
    tilt: Tilt,
    times: Sequence[float] = (1.0, 5.0, 10.0),
    n: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> list[CheckReport]:
    """Monte Carlo mean of ``M_t`` under P at each time, checked against 1."""
    times = [float(t) for t in times]
    vals = _per_block(
        model,
        max(times),
        n,
        seed,
        threads,
        lambda b: np.column_stack([np.exp(log_density_batch(model, tilt, b, t)) for t in times]),
    )
    return [
        CheckReport.build("martingale_unit_mean", 1.0, Estimate.from_samples(vals[:, j], seed), t)
        for j, t in enumerate(times)
    ]


def compensated_drift(
    model: RiskModel,
    c: Callable[[np.ndarray], np.ndarray] | float,
    times: Sequence[float] = (5.0, 10.0),
    n: int = 100_000,
    seed: int = 0,
    threads: int = 1,
    target: float = 0.0,
    sided: str = "two",
    name: str = "compensated_drift",
) -> list[CheckReport]:
    """Estimates ``E[S_t - t c(Theta)]`` under ``model`` at each time."""
    times = [float(t) for t in times]

    def rate(rows):
        if callable(c):
            return np.asarray(c(rows), dtype=float).reshape(-1)
        return np.full(rows.shape[0], float(c))

    def fn(b):
        cr = rate(b.thetas)
        return np.column_stack([b.aggregates_at(t) - t * cr for t in times])

    vals = _per_block(model, max(times), n, seed, threads, fn, salt=0xD1)
    return [
        CheckReport.build(name, target, Estimate.from_samples(vals[:, j], seed), t, sided=sided)
        for j, t in enumerate(times)
    ]


def conditional_drift(
    model: RiskModel,
    c: Callable[[np.ndarray], np.ndarray],
    grid: np.ndarray,
    times: Sequence[float] = (5.0, 10.0),
    n: int = 20_000,
    seed: int = 0,
    threads: int = 1,
) -> list[CheckReport]:
    """Per-theta compensator checks: one degenerate-mixing run per grid point."""
    out = []
    for g, row in enumerate(np.atleast_2d(grid)):
        point = dist.Degenerate(float(row[0])) if row.size == 1 else dist.Product(tuple(dist.Degenerate(float(v)) for v in row))
        fixed = RiskModel(point, model.kernel, model.claims)
        reps = compensated_drift(fixed, c, times, n, seed + g, threads, name=f"conditional_drift[theta={row.tolist()}]")
        out.extend(reps)
    return out


def unconditional_rate(model: RiskModel) -> float:
    """``E[X_1] / E[W_1]`` with ``E[W_1] = E[E[W_1 | Theta]]`` by quadrature."""
    mean_w, _ = expect(model.mixing, lambda ys: model.kernel.mean(theta_rows(ys, model.dim) if model.dim == 1 else np.atleast_2d(ys)))
    return model.claims.mean() / mean_w


def jensen_gap(model: RiskModel, t: float = 10.0, n: int = 100_000, seed: int = 0, threads: int = 1) -> CheckReport:
    """Compensating with the unconditional rate leaves a strictly positive drift
    when the mixing law is not degenerate; the check passes when ``z > 3.29``."""
    c = unconditional_rate(model)
    (rep,) = compensated_drift(model, c, (t,), n, seed, threads, target=0.0, sided="greater", name="jensen_gap")
    return rep


# -- strong law and Wald identities -----------------------------------------------------------


@dataclass
class SLLNReport:
    t: float
    q95: float
    mean_abs: float
    mean_count: float
    errors: np.ndarray = field(repr=False)


def slln_ratio(
    model: RiskModel,
    times: Sequence[float] = (200.0, 400.0),
    n: int = 2_000,
    seed: int = 0,
    threads: int = 1,
) -> list[SLLNReport]:
    """``|S_t / t - p(P, theta)|`` per path, each path against its own theta.

    All times are evaluated on the same paths.
    """
    times = [float(t) for t in times]

    def fn(b):
        p = model.claims.mean() / model.kernel.mean(b.thetas)
        cols = [np.abs(b.aggregates_at(t) / t - p) for t in times]
        cols += [b.counts_at(t).astype(float) for t in times]
        return np.column_stack(cols)

    vals = _per_block(model, max(times), n, seed, threads, fn, salt=0x51)
    k = len(times)
    return [
        SLLNReport(t, float(np.quantile(vals[:, j], 0.95)), float(vals[:, j].mean()), float(vals[:, k + j].mean()), vals[:, j])
        for j, t in enumerate(times)
    ]


def slln_doubling(
    model: RiskModel,
    t: float = 200.0,
    replicates: int = 20,
    n: int = 2_000,
    seed: int = 0,
    threads: int = 1,
) -> tuple[float, list[tuple[float, float]]]:
    """Fraction of seed replicates where doubling ``t`` lowers the 95th percentile error."""
    pairs = []
    for r in range(replicates):
        a, b = slln_ratio(model, (t, 2 * t), n, seed + r, threads)
        pairs.append((a.q95, b.q95))
    frac = sum(b < a for a, b in pairs) / replicates
    return frac, pairs


def wald_identities(model: RiskModel, t: float, n: int = 100_000, seed: int = 0, threads: int = 1) -> list[CheckReport]:
    """Mean and variance of ``S_t`` against mixed-Poisson closed forms."""
    if not model.kernel.is_exponential():
        raise UnsupportedOperationError("closed-form moments need an exponential kernel")

    def lam(ys):
        return model.kernel.rate(theta_rows(ys, model.dim) if model.dim == 1 else np.atleast_2d(ys))

    m1, _ = expect(model.mixing, lam)
    m2, _ = expect(model.mixing, lambda ys: lam(ys) ** 2)
    ex, vx = model.claims.mean(), model.claims.var()
    mean_n = t * m1
    var_n = t * m1 + t * t * (m2 - m1 * m1)
    target_mean = mean_n * ex
    target_var = mean_n * vx + var_n * ex * ex

    s = _per_block(model, t, n, seed, threads, lambda b: b.aggregates_at(t)[:, None], salt=0x3A)[:, 0]
    mean_est = Estimate.from_samples(s, seed)
    centered = (s - target_mean) ** 2
    var_est = Estimate.from_samples(centered, seed)
    return [
        CheckReport.build("wald_mean", target_mean, mean_est, t),
        CheckReport.build("wald_variance", target_var, var_est, t),
    ]


# -- association inequality -----------------------------------------------------------------------


@dataclass(frozen=True)
class AssociationResult:
    lhs: Fraction
    rhs: Fraction
    direction: str  # ">=" or "<="
    holds: bool


def _monotone_direction(values: Sequence[Fraction]) -> str:
    diffs = [b - a for a, b in zip(values[:-1], values[1:])]
    if all(d >= 0 for d in diffs):
        return "increasing"
    if all(d <= 0 for d in diffs):
        return "decreasing"
    return "none"


def association_inequality(
    atoms: Sequence,
    probs: Sequence,
    f: Callable[[Any], Any],
    g: Callable[[Any], Any],
    event: Sequence | None = None,
    f_dir: str | None = None,
    g_dir: str | None = None,
) -> AssociationResult:
    """Exact check of ``E[1_A f g] P(A)`` against ``E[1_A f] E[1_A g]`` on a finite support.

    Both sides are computed in rational arithmetic. Same monotonicity gives
    ``>=``; opposite monotonicity gives ``<=``. The declared directions are
    verified on the support.
    """
    order = sorted(range(len(atoms)), key=lambda i: atoms[i])
    zs = [Fraction(atoms[i]) for i in order]
    ps = [Fraction(probs[i]) for i in order]
    if any(p < 0 for p in ps) or sum(ps) != 1:
        raise ValueError("probabilities must be nonnegative and sum to one")
    fv = [Fraction(f(z)) for z in zs]
    gv = [Fraction(g(z)) for z in zs]
    fd, gd = _monotone_direction(fv), _monotone_direction(gv)
    if fd == "none" or gd == "none":
        raise ValueError("f and g must be monotone on the support")
    for declared, found, label in ((f_dir, fd, "f"), (g_dir, gd, "g")):
        if declared is not None and declared != found and len(set(fv if label == "f" else gv)) > 1:
            raise ValueError(f"{label} declared {declared} but is {found} on the support")
    in_a = [True] * len(zs) if event is None else [z in {Fraction(e) for e in event} for z in zs]
    pa = sum(p for p, a in zip(ps, in_a) if a)
    if pa <= 0:
        raise ValueError("the event must have positive probability")
    e_fg = sum(p * x * y for p, x, y, a in zip(ps, fv, gv, in_a) if a)
    e_f = sum(p * x for p, x, a in zip(ps, fv, in_a) if a)
    e_g = sum(p * y for p, y, a in zip(ps, gv, in_a) if a)
    lhs, rhs = e_fg, e_f * e_g / pa
    # constant functions are both increasing and decreasing
    same = fd == gd or len(set(fv)) == 1 or len(set(gv)) == 1
    direction = ">=" if same else "<="
    holds = lhs >= rhs if same else lhs <= rhs
    return AssociationResult(lhs, rhs, direction, holds)


# -- path-law equivalence ---------------------------------------------------------------------


@dataclass
class KSReport:
    statistic: float
    p_value: float
    critical: float
    stat_n: float
    stat_s: float
    ess: float
    n_perm: int
    alpha: float
    passed: bool
    t: float
    weight_mean: float

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    def row(self) -> dict[str, Any]:
        return {
            "check": "pathlaw_equivalence",
            "t": self.t,
            "value": self.statistic,
            "target": self.critical,
            "stderr": "",
            "z": "",
            "pass": int(self.passed),
        }


def _ks_stats(values: np.ndarray, order: np.ndarray, last_of_run: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """Sup distance between two weighted ECDFs for each column of weights.

    ``wa``/``wb`` have shape (n, k): per observation, the weight it carries in
    group A and group B for each of ``k`` labelings.
    """
    diff = np.cumsum(wa[order] - wb[order], axis=0)[last_of_run]
    return np.max(np.abs(diff), axis=0)


def pathlaw_equivalence(
    model: RiskModel,
    tilt: Tilt,
    t: float = 5.0,
    n: int = 50_000,
    seed: int = 0,
    threads: int = 1,
    n_perm: int = 199,
    alpha: float = 0.01,
    min_ess: float = 100.0,
) -> KSReport:
    """Weighted P-sample versus direct Q-sample of ``(N_t, S_t)``.

    The P-side empirical distribution function carries weights ``M_t / n``
    without self-normalization, so a density with the wrong total mass is
    detected. The statistic is the larger of the sup distances for ``N_t``
    and ``S_t``; its null distribution comes from ``n_perm`` random
    relabelings of the pooled sample with weights attached to observations.
    """
    qm = q_model(model, tilt)

    def p_side(b):
        return np.column_stack([b.counts_at(t), b.aggregates_at(t), log_density_batch(model, tilt, b, t)])

    def q_side(b):
        return np.column_stack([b.counts_at(t), b.aggregates_at(t)])

    ps = _per_block(model, t, n, seed, threads, p_side, salt=0xA1)
    qs = _per_block(qm, t, n, seed, threads, q_side, salt=0xB2)
    w = np.exp(ps[:, 2])
    ess = float(w.sum() ** 2 / np.sum(w * w))
    if ess < min_ess:
        raise InconclusiveError(f"effective sample size {ess:.1f} below {min_ess}")

    n_p, n_q = ps.shape[0], qs.shape[0]
    pooled_w = np.concatenate([w, np.ones(n_q)])
    labels0 = np.concatenate([np.ones(n_p, dtype=bool), np.zeros(n_q, dtype=bool)])
    rng = block_rng(seed, 0, salt=0xC3)
    perms = [labels0] + [rng.permutation(labels0) for _ in range(n_perm)]

    stats = []
    for col in (0, 1):
        values = np.concatenate([ps[:, col], qs[:, col]])
        order = np.argsort(values, kind="stable")
        sv = values[order]
        last_of_run = np.flatnonzero(np.append(sv[1:] != sv[:-1], True))
        per = []
        # process labelings in chunks to bound memory
        for k0 in range(0, len(perms), 25):
            lab = np.column_stack(perms[k0 : k0 + 25])
            wa = np.where(lab, pooled_w[:, None] / n_p, 0.0)
            wb = np.where(lab, 0.0, pooled_w[:, None] / n_q)
            per.append(_ks_stats(values, order, last_of_run, wa, wb))
        stats.append(np.concatenate(per))
    joint = np.maximum(stats[0], stats[1])
    observed = float(joint[0])
    null = joint[1:]
    p_value = float((1 + np.sum(null >= observed)) / (n_perm + 1))
    critical = float(np.quantile(null, 1 - alpha))
    return KSReport(
        statistic=observed,
        p_value=p_value,
        critical=critical,
        stat_n=float(stats[0][0]),
        stat_s=float(stats[1][0]),
        ess=ess,
        n_perm=n_perm,
        alpha=alpha,
        passed=p_value > alpha,
        t=float(t),
        weight_mean=float(w.mean()),
    )
