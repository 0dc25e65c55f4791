"""Dilution feedback laws and the growth-rate-error perturbation ledger.

The controller acts on log-deviation coordinates

    eta_i = ln(<pi0_i, x_i> / (x_i*(0) * kappa_i)),

where <f, g> is the trapezoid inner product over age.  In these coordinates
the nominal law is affine in exp(-eta1) and exp(eta2) with gains

    a = 1/(x1*(0)*gamma2),   b = gamma1 * x2*(0) = zeta1 - zeta2 + a.

When the growth rates are replaced by approximations zeta_i - e_i, every
downstream operator evaluation shifts; the ledger collects those shifts
(Gamma, K, P channels and the hatted composites a_hat, m1_hat, m2_hat) so
the induced control perturbation delta_u can be formed and bounded.

The nominal gain constants use the exact adjoint identity
<pi0_i, n_i> = kappa_i, keeping the setpoint identities exact on the grid;
the ledger's P_i perturbations remain honest discrete inner products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .equilibrium import EquilibriumSpec, SpeciesSpec
from .grids import AgeProfile, integrate, trapezoid_weights
from .operators import generation_time, interaction_gain, reproductive_value


@dataclass(frozen=True)
class ControllerConfig:
    """Feedback gain beta and weighting epsilon.

    The Lyapunov-rate matrix is positive definite iff
    beta > epsilon / (4*(1+epsilon)).
    """

    beta: float
    epsilon: float

    def __post_init__(self):
        if not self.beta > 0 or not self.epsilon > 0:
            raise ValueError("beta and epsilon must be positive")
        if not self.beta > self.epsilon / (4.0 * (1.0 + self.epsilon)):
            raise ValueError(
                f"beta = {self.beta:g} must exceed eps/(4(1+eps)) = "
                f"{self.epsilon / (4 * (1 + self.epsilon)):g}"
            )


@dataclass(frozen=True)
class LogDeviations:
    """Log-deviation coordinates of the two weighted population functionals."""

    eta1: float
    eta2: float

    def __post_init__(self):
        if not (math.isfinite(self.eta1) and math.isfinite(self.eta2)):
            raise ValueError("log deviations must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.eta1, self.eta2])


def inner_product(f: AgeProfile, g: AgeProfile) -> float:
    """Trapezoid inner product <f, g> = integral of f*g over [0, A]."""
    return integrate(AgeProfile(f.grid, f.values * g.values))


def log_deviations_from_state(
    x1: AgeProfile,
    x2: AgeProfile,
    eq: EquilibriumSpec,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
) -> LogDeviations:
    """Measure eta from population densities via the reproductive values."""
    w1 = inner_product(prey.pi0, x1)
    w2 = inner_product(predator.pi0, x2)
    if w1 <= 0.0 or w2 <= 0.0:
        raise DomainError(
            f"weighted populations must be positive, got ({w1:g}, {w2:g})"
        )
    return LogDeviations(
        eta1=math.log(w1 / (eq.x1_star0 * prey.kappa)),
        eta2=math.log(w2 / (eq.x2_star0 * predator.kappa)),
    )


def gain_constants(eq: EquilibriumSpec) -> tuple[float, float]:
    """(a, b) gain pair; b = gamma1*x2*(0) equals zeta1 - zeta2 + a exactly."""
    return 1.0 / (eq.x1_star0 * eq.gamma2), eq.gamma1 * eq.x2_star0


def u_nominal(
    eta: LogDeviations,
    cfg: ControllerConfig,
    eq: EquilibriumSpec,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
) -> float:
    """Nominal dilution law; returns u* exactly at eta = 0."""
    a, b = gain_constants(eq)
    bracket = (
        (1.0 + cfg.epsilon) * (predator.zeta - prey.zeta)
        - cfg.epsilon * a
        - a * math.exp(-eta.eta1)
        + (1.0 + cfg.epsilon) * b * math.exp(eta.eta2)
    )
    return predator.zeta - a + cfg.beta * bracket


def u_nominal_from_populations(
    x1: AgeProfile,
    x2: AgeProfile,
    cfg: ControllerConfig,
    eq: EquilibriumSpec,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
) -> float:
    """Pre-substitution form of the nominal law, straight from <pi0, x>.

    Algebraically identical to u_nominal composed with
    log_deviations_from_state; kept as an independent evaluation route.
    """
    w1 = inner_product(prey.pi0, x1)
    w2 = inner_product(predator.pi0, x2)
    if w1 <= 0.0 or w2 <= 0.0:
        raise DomainError("weighted populations must be positive")
    a = 1.0 / (eq.x1_star0 * eq.gamma2)
    bracket = a * (1.0 - eq.x1_star0 * prey.kappa / w1) - (
        1.0 + cfg.epsilon
    ) * eq.x2_star0 * eq.gamma1 * (1.0 - w2 / (eq.x2_star0 * predator.kappa))
    return predator.zeta - a + cfg.beta * bracket


@dataclass(frozen=True)
class PerturbationLedger:
    """Every hatted quantity induced by growth-rate errors (e1, e2).

    Gamma/K/P are the shifts of the interaction gains, generation times,
    and reproductive-value inner products; a_hat/m1_hat/m2_hat the hatted
    control gains.  delta_gain and delta_u are evaluated at eta = (0, 0);
    use delta_gain_at / delta_u_at for other states.  At e1 = e2 = 0 every
    hatted quantity reduces exactly to its nominal counterpart.
    """

    e1: float
    e2: float
    zeta1_hat: float
    zeta2_hat: float
    a_hat: float
    m1: float
    m1_hat: float
    m2: float
    m2_hat: float
    Gamma1: float
    Gamma2: float
    K1: float
    K2: float
    P1: float
    P2: float
    delta_gain: float
    delta_u: float


def hatted_quantities(
    e1: float,
    e2: float,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
) -> PerturbationLedger:
    """Evaluate all operators at the shifted growth rates zeta_i - e_i."""
    a, b = gain_constants(eq)
    z1h = prey.zeta - e1
    z2h = predator.zeta - e2

    # e1 channel: gamma2, kappa1, pi0_1 all shift with zeta1.
    if e1 == 0.0:
        big_gamma2 = big_k1 = p1 = 0.0
        a_hat = a
        m1_hat = a
    else:
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                big_gamma2 = interaction_gain(predator.g, z1h, prey.mu) - eq.gamma2
                big_k1 = generation_time(prey.k, prey.mu, z1h) - prey.kappa
                pi1_hat = reproductive_value(prey.k, prey.mu, z1h)
        except ValueError as exc:
            raise DomainError(
                f"operator evaluation failed at zeta1_hat = {z1h:g}: {exc}"
            ) from exc
        w1 = trapezoid_weights(prey.grid)
        p1 = float(
            w1 @ ((pi1_hat.values - prey.pi0.values) * prey.n_profile.values)
        )
        denom_gamma = eq.gamma2 + big_gamma2
        denom_pi = prey.kappa + p1
        if not (
            np.isfinite(denom_gamma) and denom_gamma > 0.0
            and np.isfinite(denom_pi) and denom_pi > 0.0
            and np.isfinite(big_k1)
        ):
            raise DomainError(
                "hatted denominator left (0, inf) on the e1 channel"
                f" (gamma2_hat={denom_gamma:g}, pi1_hat={denom_pi:g})"
            )
        a_hat = 1.0 / (eq.x1_star0 * denom_gamma)
        m1_hat = (prey.kappa + big_k1) / (eq.x1_star0 * denom_gamma * denom_pi)

    # e2 channel: gamma1, kappa2, pi0_2 all shift with zeta2.
    if e2 == 0.0:
        big_gamma1 = big_k2 = p2 = 0.0
        m2_hat = b
    else:
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                big_gamma1 = interaction_gain(prey.g, z2h, predator.mu) - eq.gamma1
                big_k2 = generation_time(predator.k, predator.mu, z2h) - predator.kappa
                pi2_hat = reproductive_value(predator.k, predator.mu, z2h)
        except ValueError as exc:
            raise DomainError(
                f"operator evaluation failed at zeta2_hat = {z2h:g}: {exc}"
            ) from exc
        w2 = trapezoid_weights(predator.grid)
        p2 = float(
            w2 @ ((pi2_hat.values - predator.pi0.values) * predator.n_profile.values)
        )
        denom_kappa = predator.kappa + big_k2
        if not (
            np.isfinite(denom_kappa) and denom_kappa > 0.0
            and np.isfinite(big_gamma1) and np.isfinite(p2)
        ):
            raise DomainError(
                "hatted denominator left (0, inf) on the e2 channel"
                f" (kappa2_hat={denom_kappa:g})"
            )
        m2_hat = (eq.gamma1 + big_gamma1) * eq.x2_star0 * (predator.kappa + p2) \
            / denom_kappa

    eps = cfg.epsilon
    dg0 = (
        (1.0 + eps) * (e1 - e2)
        - eps * (a_hat - a)
        - (m1_hat - a)
        + (1.0 + eps) * (m2_hat - b)
    )
    du0 = -e2 - (a_hat - a) + cfg.beta * dg0
    return PerturbationLedger(
        e1=e1,
        e2=e2,
        zeta1_hat=z1h,
        zeta2_hat=z2h,
        a_hat=a_hat,
        m1=a,
        m1_hat=m1_hat,
        m2=b,
        m2_hat=m2_hat,
        Gamma1=big_gamma1,
        Gamma2=big_gamma2,
        K1=big_k1,
        K2=big_k2,
        P1=p1,
        P2=p2,
        delta_gain=dg0,
        delta_u=du0,
    )


def delta_gain_at(eta: LogDeviations, ledger: PerturbationLedger,
                  cfg: ControllerConfig) -> float:
    """Gain-channel perturbation at an arbitrary state."""
    eps = cfg.epsilon
    return (
        (1.0 + eps) * (ledger.e1 - ledger.e2)
        - eps * (ledger.a_hat - ledger.m1)
        - (ledger.m1_hat - ledger.m1) * math.exp(-eta.eta1)
        + (1.0 + eps) * (ledger.m2_hat - ledger.m2) * math.exp(eta.eta2)
    )


def delta_u_at(eta: LogDeviations, ledger: PerturbationLedger,
               cfg: ControllerConfig) -> float:
    """Control perturbation -e2 - (a_hat - a) + beta*delta_gain at eta."""
    return (
        -ledger.e2
        - (ledger.a_hat - ledger.m1)
        + cfg.beta * delta_gain_at(eta, ledger, cfg)
    )


def u_approx(
    eta: LogDeviations,
    ledger: PerturbationLedger,
    cfg: ControllerConfig,
    eq: EquilibriumSpec | None = None,
) -> float:
    """Approximate dilution law evaluated through the hatted gains.

    Reduces exactly to u_nominal when the ledger was built at e1 = e2 = 0.
    """
    eps = cfg.epsilon
    bracket = (
        (1.0 + eps) * (ledger.zeta2_hat - ledger.zeta1_hat)
        - eps * ledger.a_hat
        - ledger.m1_hat * math.exp(-eta.eta1)
        + (1.0 + eps) * ledger.m2_hat * math.exp(eta.eta2)
    )
    return ledger.zeta2_hat - ledger.a_hat + cfg.beta * bracket


def zero_ledger(
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
) -> PerturbationLedger:
    """Ledger at e1 = e2 = 0 (exact growth rates)."""
    return hatted_quantities(0.0, 0.0, prey, predator, eq, cfg)


class ClampCounter:
    """Counts dilution saturations at the nonnegativity constraint."""

    def __init__(self):
        self.count = 0


def clamp_dilution(u: float, counter: ClampCounter | None = None) -> float:
    """Project the dilution command onto u >= 0, counting strict clamps."""
    if u < 0.0:
        if counter is not None:
            counter.count += 1
        return 0.0
    return u
