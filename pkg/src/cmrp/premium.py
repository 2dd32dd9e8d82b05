"""Premium densities under P and under a tilted measure Q, the
risk-adjusted (distortion) premium, and ordering reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import dist
from .dist import Law
from .errors import CMRPError, DomainError, ModelValidationError, ValidationInconclusiveError
from .model import RiskModel, theta_grid, theta_rows
from .numerics import expect
from .tilt import Tilt, _alpha_and_log_rho_mean

STRICT_FACTOR = 10.0
# pointwise values come from quadrature on one side; gaps below this are round-off
EQUAL_RTOL = 1e-10


def _scalar_or_array(theta, out):
    return float(out[0]) if np.ndim(theta) <= 1 and out.shape[0] == 1 else out


def conditional_premium_density(model: RiskModel, theta) -> Any:
    """``p(P, theta) = E[X_1] / E[W_1 | theta]``."""
    rows = theta_rows(theta, model.dim)
    out = model.claims.mean() / model.kernel.mean(rows)
    if not np.all(np.isfinite(out)):
        raise ModelValidationError("premium density is not finite")
    return _scalar_or_array(theta, out)


def _mixing_integral(model_mixing: Law, dim: int, fn) -> tuple[float, float]:
    try:
        return expect(model_mixing, lambda ys: fn(theta_rows(ys, dim) if dim == 1 else np.atleast_2d(ys)))
    except ValidationInconclusiveError as exc:
        raise DomainError(f"mixing integral does not converge: {exc}") from exc


def mixed_premium_density(model: RiskModel) -> tuple[float, float]:
    """``p(P) = E[p(P, Theta)]`` by quadrature, with an error estimate."""
    return _mixing_integral(model.mixing, model.dim, lambda rows: conditional_premium_density(model, rows))


def tilted_claim_mean(model: RiskModel, tilt: Tilt) -> tuple[float, float]:
    """``E_P[X_1 e^{gamma(X_1)}]`` by quadrature."""
    try:
        return expect(model.claims, lambda x: np.asarray(x) * np.exp(tilt.gamma(np.asarray(x, dtype=float))))
    except ValidationInconclusiveError as exc:
        raise DomainError(f"tilted claim integral diverges: {exc}") from exc


def q_premium(model: RiskModel, tilt: Tilt, theta, route: str = "P") -> Any:
    """``p(Q, theta) = E_P[X_1 e^{beta(X_1, theta)}] / E_P[W_1 | theta]``.

    ``route="P"`` integrates the tilted claim moment under P; ``route="Q"``
    uses ``rho(theta) * E_Q[X_1]`` from the closed-form Q claim law.
    """
    rows = theta_rows(theta, model.dim)
    rho, alpha, _ = _alpha_and_log_rho_mean(model, tilt, rows)
    if route == "P":
        m1, _ = tilted_claim_mean(model, tilt)
        out = np.exp(alpha) / model.kernel.mean(rows) * m1
    elif route == "Q":
        if tilt.q_claims is None:
            raise DomainError("no closed-form Q claim law for the Q-side route")
        out = rho * tilt.q_claims.mean()
    else:
        raise ValueError(f"unknown route {route!r}")
    return _scalar_or_array(theta, out)


def mixed_q_premium(model: RiskModel, tilt: Tilt) -> tuple[float, float]:
    """``p(Q) = E_Q[p(Q, Theta)] = E_P[xi(Theta) p(Q, Theta)]``."""
    m1, e1 = tilted_claim_mean(model, tilt)

    def integrand(rows):
        rho, alpha, _ = _alpha_and_log_rho_mean(model, tilt, rows)
        return np.asarray(tilt.xi(rows), dtype=float) * np.exp(alpha) / model.kernel.mean(rows) * m1

    val, err = _mixing_integral(model.mixing, model.dim, integrand)
    return val, err + abs(val) * e1 / max(m1, 1e-300)


def wang_premium(claims: Law, c: float) -> tuple[float, float]:
    """Risk-adjusted premium ``int_0^inf sf(x)^{1/c} dx`` and its error bound."""
    if not c >= 1:
        raise DomainError("the risk-adjusted premium needs c >= 1")
    try:
        return dist.survival_integral(claims, 1.0 / c)
    except Exception as exc:
        raise DomainError(f"risk-adjusted premium integral diverges for c={c}: {exc}") from exc


# -- ordering -------------------------------------------------------------------------


@dataclass
class PremiumReport:
    grid: np.ndarray
    p_P_theta: np.ndarray
    p_Q_theta: np.ndarray
    p_P: float
    p_Q: float
    p_P_err: float
    p_Q_err: float
    pointwise: str  # "strict", "weak", "equal", "violated"
    mixed: str  # "strict", "reversed", "equal", "undecided"
    counterexample: bool
    verification: str  # "GRID-VERIFIED" or "GRID+MONOTONE"
    monotone_association: bool | None = None
    notes: list[str] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {
            "p_P": self.p_P,
            "p_Q": self.p_Q,
            "p_P_err": self.p_P_err,
            "p_Q_err": self.p_Q_err,
            "pointwise": self.pointwise,
            "mixed": self.mixed,
            "counterexample": self.counterexample,
            "verification": self.verification,
            "monotone_association": self.monotone_association,
            "grid_points": int(self.grid.shape[0]),
            "notes": list(self.notes),
        }


def _monotone_on_grid(values: np.ndarray, direction: str) -> bool:
    diffs = np.diff(values)
    if direction == "increasing":
        return bool(np.all(diffs >= 0))
    if direction == "decreasing":
        return bool(np.all(diffs <= 0))
    return bool(np.allclose(diffs, 0.0))


def ordering_report(model: RiskModel, tilt: Tilt, grid: np.ndarray | None = None) -> PremiumReport:
    """Compare ``p(P, theta)`` with ``p(Q, theta)`` on a grid and ``p(P)`` with ``p(Q)``."""
    if grid is None:
        grid = theta_grid(model.mixing, 64)
    pp = np.asarray(conditional_premium_density(model, grid), dtype=float).reshape(-1)
    pq = np.asarray(q_premium(model, tilt, grid), dtype=float).reshape(-1)
    notes: list[str] = []
    band = EQUAL_RTOL * np.abs(pp)
    if np.all(pq - pp > band):
        pointwise = "strict"
    elif np.all(np.abs(pq - pp) <= band):
        pointwise = "equal"
    elif np.all(pq - pp >= -band):
        pointwise = "weak"
    else:
        pointwise = "violated"

    p_P, e_P = mixed_premium_density(model)
    p_Q, e_Q = mixed_q_premium(model, tilt)
    err = STRICT_FACTOR * (e_P + e_Q) + 1e-12 * max(abs(p_P), abs(p_Q))
    if p_Q - p_P > err:
        mixed = "strict"
    elif p_P - p_Q > err:
        mixed = "reversed"
    elif abs(p_P - p_Q) <= EQUAL_RTOL * max(abs(p_P), 1e-300):
        mixed = "equal"
    else:
        mixed = "undecided"
    counter = pointwise == "strict" and mixed == "reversed"

    assoc = None
    verification = "GRID-VERIFIED"
    if model.dim == 1 and tilt.xi_monotone and tilt.q_premium_monotone:
        same = tilt.xi_monotone == tilt.q_premium_monotone and tilt.xi_monotone != "constant"
        xi_ok = _monotone_on_grid(np.asarray(tilt.xi(grid), dtype=float), tilt.xi_monotone)
        pq_ok = _monotone_on_grid(pq, tilt.q_premium_monotone)
        if not (xi_ok and pq_ok):
            notes.append("declared monotonicity contradicted by finite differences on the grid")
        elif same:
            assoc = True
            verification = "GRID+MONOTONE"
            if pointwise in ("strict", "weak", "equal") and mixed == "reversed":
                notes.append("mixed ordering reversed although the association argument applies")
                assoc = False
        else:
            assoc = None
            notes.append("xi and p(Q, .) have opposite monotonicity; mixed ordering not implied")
    return PremiumReport(grid, pp, pq, p_P, p_Q, e_P, e_Q, pointwise, mixed, counter, verification, assoc, notes)


def check_two_routes(model: RiskModel, tilt: Tilt, grid: np.ndarray, rtol: float = 1e-8) -> float:
    """Largest relative gap between the P-side and Q-side premium routes."""
    a = np.asarray(q_premium(model, tilt, grid, route="P"), dtype=float)
    b = np.asarray(q_premium(model, tilt, grid, route="Q"), dtype=float)
    gap = float(np.max(np.abs(a - b) / np.abs(b)))
    if gap > rtol:
        raise CMRPError(f"premium routes disagree (relative gap {gap:.3e})")
    return gap

