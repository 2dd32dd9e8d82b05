"""Named scenarios: the three worked pricing examples, the ordering
counterexample, and an exponential/exponential ruin benchmark.

Parameter defaults are chosen so that the density martingale has a finite
second moment over the default time grid (t <= 10); the constraints of each
construction are enforced by the tilt builders.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from . import dist
from .model import ExponentialKernel, GammaKernel, HyperExponentialKernel, RiskModel
from .tilt import Tilt, compose, example1_tilt, example2_tilt, exp_mixing_xi, wang_tilt


@dataclass(frozen=True)
class Preset:
    name: str
    model: RiskModel
    tilt: Tilt
    params: dict[str, Any] = field(default_factory=dict)
    # closed forms keyed by quantity name, each a function of theta rows or constant
    closed_forms: dict[str, Any] = field(default_factory=dict)
    expected_ordering: str = "strict"  # "strict", "reversed" or "equal"


def example1(zeta: float = 1.0, c: float = 3.0, mix_rate: float = 1.0, mix_shape: float = 2.0) -> Preset:
    """Hyperexponential kernel on (1, inf)^2, Ga(zeta, 2) claims.

    The mixing law is not fixed by the construction; each component is
    ``1 + Ga(mix_rate, mix_shape)`` independently.
    """
    comp = dist.Shifted(dist.Gamma(mix_rate, mix_shape), 1.0)
    model = RiskModel(dist.Product((comp, comp)), HyperExponentialKernel((0.5, 0.5)), dist.Gamma(zeta, 2.0))
    tilt = example1_tilt(zeta, c)
    forms = {
        "p_P_theta": lambda rows: 4.0 / (zeta * (rows[:, 0] + rows[:, 1])),
        "p_Q_theta": lambda rows: 2.0 * c / (zeta * (rows[:, 0] + rows[:, 1])),
        "e_x2_exp_gamma": 2.0 * c * c / zeta,
    }
    params = {"zeta": zeta, "c": c, "mix_rate": mix_rate, "mix_shape": mix_shape}
    return Preset("example1", model, tilt, params, forms)


def _example2_model(k: float, eta: float, b1: float, a: float) -> RiskModel:
    return RiskModel(dist.Gamma(b1, a), GammaKernel(k), dist.Exponential(eta))


def example2(
    k: float = 1.3,
    eta: float = 1.0,
    c: float = 0.1,
    d: float = 1.25,
    b1: float = 4.0,
    b2: float = 3.5,
    a: float = 4.0,
) -> Preset:
    """Gamma kernel Ga(theta, k), Exp(eta) claims, Ga(b1, a) mixing."""
    model = _example2_model(k, eta, b1, a)
    tilt = example2_tilt(k, eta, c, d, b1, b2, a)
    forms = {
        "p_P_theta": lambda rows: rows[:, 0] / (k * eta),
        "p_Q_theta": lambda rows: rows[:, 0] / (d * (eta - c)),
        "p_P": a / (b1 * k * eta),
        "p_Q": a / (b2 * d * (eta - c)),
    }
    params = dict(k=k, eta=eta, c=c, d=d, b1=b1, b2=b2, a=a)
    return Preset("example2", model, tilt, params, forms)


def example2_cou(
    k: float = 1.3,
    eta: float = 1.0,
    d: float = 1.25,
    b1: float = 4.0,
    b2: float = 5.0,
    a: float = 4.0,
) -> Preset:
    """Same model with ``c = 0`` and ``b2 > b1 k / d``: pointwise ordering, mixed reversal."""
    model = _example2_model(k, eta, b1, a)
    tilt = example2_tilt(k, eta, 0.0, d, b1, b2, a, counterexample=True)
    forms = {
        "p_P_theta": lambda rows: rows[:, 0] / (k * eta),
        "p_Q_theta": lambda rows: rows[:, 0] / (d * eta),
        "p_P": a / (b1 * k * eta),
        "p_Q": a / (b2 * d * eta),
    }
    params = dict(k=k, eta=eta, c=0.0, d=d, b1=b1, b2=b2, a=a)
    return Preset("example2-cou", model, tilt, params, forms, expected_ordering="reversed")


def example3(c: float = 1.25, r: float = 0.5, mix_rate: float = 4.0, mix_shape: float = 4.0) -> Preset:
    """Exponential kernel Exp(theta), Uniform(0, 1) claims, risk-adjusted claim tilt
    and exponential mixing tilt ``xi = e^{r theta} / E[e^{r Theta}]``."""
    model = RiskModel(dist.Gamma(mix_rate, mix_shape), ExponentialKernel(1.0), dist.Uniform(0.0, 1.0))
    tilt = compose(wang_tilt(model, c), exp_mixing_xi(model, r), name="example3")
    pi_c = c / (1.0 + c)  # int_0^1 (1 - x)^{1/c} dx
    forms = {
        "p_P_theta": lambda rows: 0.5 * rows[:, 0],
        "p_Q_theta": lambda rows: pi_c * rows[:, 0],
        "pi_c": pi_c,
        "p_P": 0.5 * mix_shape / mix_rate,
        "p_Q": pi_c * mix_shape / (mix_rate - r),
    }
    return Preset("example3", model, tilt, dict(c=c, r=r, mix_rate=mix_rate, mix_shape=mix_shape), forms)


def exp_exp_ruin(
    eta: float = 0.25,
    c: float = 0.05,
    d: float = 0.9,
    b1: float = 4.0,
    b2: float = 3.5,
    a: float = 4.0,
) -> Preset:
    """Mixed Cramer-Lundberg model: Exp(theta) kernel, Ga(b1, a) mixing, Exp(eta)
    claims, with the Gamma-kernel tilt at ``k = 1``. The premium rate used for
    ruin is the Q-premium density ``theta / (d (eta - c))``.

    Defaults keep ``c < eta / 2`` and ``d`` near 1 so that ``M_t`` has a finite
    second moment, and make claims large relative to ``u <= 5`` so nearly every
    Q-path is ruined within ``10^5`` claims."""
    model = RiskModel(dist.Gamma(b1, a), ExponentialKernel(1.0), dist.Exponential(eta))
    tilt = example2_tilt(1.0, eta, c, d, b1, b2, a)
    forms = {
        "premium": lambda rows: rows[:, 0] / (d * (eta - c)),
        "p_P_theta": lambda rows: rows[:, 0] / eta,
        "p_Q_theta": lambda rows: rows[:, 0] / (d * (eta - c)),
    }
    return Preset("exp-exp-ruin", model, tilt, dict(eta=eta, c=c, d=d, b1=b1, b2=b2, a=a), forms)


REGISTRY: dict[str, Callable[..., Preset]] = {
    "example1": example1,
    "example2": example2,
    "example2-cou": example2_cou,
    "example3": example3,
    "exp-exp-ruin": exp_exp_ruin,
}

EXAMPLE_ALIASES = {"1": "example1", "2": "example2", "2cou": "example2-cou", "3": "example3"}


def get(name: str, **params) -> Preset:
    name = EXAMPLE_ALIASES.get(name, name)
    if name not in REGISTRY:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(REGISTRY)}")
    return REGISTRY[name](**params)
