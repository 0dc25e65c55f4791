"""Target equilibrium synthesis for the two-species dilution loop.

Given both species' vital rates, the equilibrium is pinned down by a single
free setpoint: the commanded prey newborn concentration x1_star0.  The
dilution u*, the predator newborn concentration, the interaction loads
lambda_i, and the steady age profiles all follow in closed form from the
growth rates and the cross-discounted interaction gains.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SetpointError
from .grids import AgeProfile, _check_shared_grid
from .operators import (
    DEFAULT_ROOT_TOL,
    generation_time,
    interaction_gain,
    reproductive_value,
    solve_growth_rate,
    stable_profile,
)


@dataclass(frozen=True)
class SpeciesSpec:
    """One species' rates plus the derived growth-rate quantities.

    n_profile is the normalized stable age distribution (n(0) = 1) and pi0
    the reproductive-value profile at the solved growth rate.
    """

    k: AgeProfile
    mu: AgeProfile
    g: AgeProfile
    zeta: float
    kappa: float
    n_profile: AgeProfile
    pi0: AgeProfile

    @property
    def grid(self):
        return self.k.grid


def build_species(
    k: AgeProfile, mu: AgeProfile, g: AgeProfile, tol: float = DEFAULT_ROOT_TOL
) -> SpeciesSpec:
    """Solve the growth rate and evaluate the derived per-species quantities."""
    _check_shared_grid(k, mu, g)
    root = solve_growth_rate(k, mu, tol)
    zeta = root.zeta
    return SpeciesSpec(
        k=k,
        mu=mu,
        g=g,
        zeta=zeta,
        kappa=generation_time(k, mu, zeta),
        n_profile=stable_profile(mu, zeta),
        pi0=reproductive_value(k, mu, zeta),
    )


@dataclass(frozen=True)
class EquilibriumScalars:
    """Pure scalar-level equilibrium algebra (no profiles attached)."""

    x1_star0: float
    x2_star0: float
    u_star: float
    lambda1: float
    lambda2: float
    gamma1: float
    gamma2: float


def equilibrium_scalars(
    zeta1: float, zeta2: float, gamma1: float, gamma2: float, x1_star0: float
) -> EquilibriumScalars:
    """Resolve the equilibrium identities from the four gains and the setpoint.

    u* = zeta2 - 1/(x1_star0*gamma2) must land in (0, min(zeta1, zeta2)),
    which translates into x1_star0 > 1/(zeta2*gamma2) and a positive
    predator newborn concentration.
    """
    lambda1 = x1_star0 * gamma2
    u_star = zeta2 - 1.0 / lambda1
    if u_star <= 0.0:
        raise SetpointError(
            f"x1_star0 = {x1_star0:g} <= 1/(zeta2*gamma2) = "
            f"{1.0 / (zeta2 * gamma2):g}: equilibrium dilution would be <= 0"
        )
    x2_star0 = (zeta1 - zeta2 + 1.0 / lambda1) / gamma1
    if x2_star0 <= 0.0:
        raise SetpointError(
            f"predator newborn concentration {x2_star0:g} <= 0"
            " (setpoint exceeds the coexistence range)"
        )
    lambda2 = x2_star0 * gamma1
    return EquilibriumScalars(
        x1_star0=x1_star0,
        x2_star0=x2_star0,
        u_star=u_star,
        lambda1=lambda1,
        lambda2=lambda2,
        gamma1=gamma1,
        gamma2=gamma2,
    )


def setpoint_for_dilution(
    zeta1: float, zeta2: float, gamma2: float, u_star: float
) -> float:
    """Invert the setpoint map: the x1_star0 that commands a given u*."""
    if not 0.0 < u_star < min(zeta1, zeta2):
        raise SetpointError(
            f"u* = {u_star:g} outside (0, min(zeta1, zeta2)) = "
            f"(0, {min(zeta1, zeta2):g})"
        )
    return 1.0 / ((zeta2 - u_star) * gamma2)


@dataclass(frozen=True)
class EquilibriumSpec:
    """Full target equilibrium: scalars plus steady age profiles."""

    x1_star0: float
    x2_star0: float
    u_star: float
    lambda1: float
    lambda2: float
    gamma1: float
    gamma2: float
    x1_star: AgeProfile
    x2_star: AgeProfile

    def to_dict(self) -> dict:
        return {
            "x1_star0": self.x1_star0,
            "x2_star0": self.x2_star0,
            "u_star": self.u_star,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
        }


def build_equilibrium(
    prey: SpeciesSpec, predator: SpeciesSpec, x1_star0: float
) -> EquilibriumSpec:
    """Synthesize the target equilibrium from species data and the setpoint.

    The interaction gains cross species: gamma1 discounts the prey's
    interaction kernel by the predator's dynamics and vice versa.
    """
    gamma1 = interaction_gain(prey.g, predator.zeta, predator.mu)
    gamma2 = interaction_gain(predator.g, prey.zeta, prey.mu)
    scal = equilibrium_scalars(prey.zeta, predator.zeta, gamma1, gamma2, x1_star0)
    x1_star = AgeProfile(prey.grid, scal.x1_star0 * prey.n_profile.values)
    x2_star = AgeProfile(predator.grid, scal.x2_star0 * predator.n_profile.values)
    return EquilibriumSpec(
        x1_star0=scal.x1_star0,
        x2_star0=scal.x2_star0,
        u_star=scal.u_star,
        lambda1=scal.lambda1,
        lambda2=scal.lambda2,
        gamma1=scal.gamma1,
        gamma2=scal.gamma2,
        x1_star=x1_star,
        x2_star=x2_star,
    )


def identity_residuals(eq: EquilibriumSpec, prey: SpeciesSpec, predator: SpeciesSpec) -> dict:
    """Residuals of the double dilution identity and the b-gain identity."""
    double = (prey.zeta - eq.lambda2) - (predator.zeta - 1.0 / eq.lambda1)
    a_gain = 1.0 / (eq.x1_star0 * eq.gamma2)
    b_gain = prey.zeta - predator.zeta + a_gain
    return {
        "double_identity": float(double),
        "b_identity": float(b_gain - eq.gamma1 * eq.x2_star0),
    }
