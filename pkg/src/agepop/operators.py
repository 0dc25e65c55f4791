"""The four gain operators of the dilution feedback architecture.

The central object is the implicit map from fertility k and mortality mu to
the intrinsic growth rate zeta, defined by the Lotka-Sharpe renewal condition

    integral_0^A k(a) exp(-zeta*a - integral_0^a mu) da = 1.

A positive root exists iff the net reproduction number exceeds one.  The
root is found by safeguarded Newton iteration inside an a-priori bracket,
using the fact that the discounted-reproduction integral F is strictly
decreasing and convex in zeta with F' = -kappa available in closed form.

The three explicit companions evaluate, at a given zeta: the generation
time kappa (mean age of discounted reproduction), the discounted
interaction gain gamma, and the reproductive-value profile pi0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .grids import (
    AgeProfile,
    ClassBounds,
    FamilyParams,
    _check_shared_grid,
    _cumtrapz,
    class_membership,
    clip_to_class,
    sample_family,
    trapezoid_weights,
)

DEFAULT_ROOT_TOL = 1e-12
MAX_ROOT_ITERATIONS = 200


class LSKernel:
    """Precomputed quadrature data for repeated evaluations on one (k, mu)."""

    def __init__(self, k: AgeProfile, mu: AgeProfile):
        grid = _check_shared_grid(k, mu)
        self.grid = grid
        self.ages = grid.points
        self.mort_cum = _cumtrapz(mu.values, grid.spacing)
        w = trapezoid_weights(grid)
        self.net_maternity = k.values * np.exp(-self.mort_cum)
        self.w_maternity = w * self.net_maternity
        self.w_maternity_age = self.w_maternity * self.ages

    def reproduction(self, zeta: float) -> float:
        """F(zeta): discounted lifetime reproduction."""
        return float(self.w_maternity @ np.exp(-zeta * self.ages))

    def reproduction_and_slope(self, zeta: float) -> tuple[float, float]:
        """F(zeta) and kappa(zeta) = -F'(zeta) in one pass."""
        disc = np.exp(-zeta * self.ages)
        return float(self.w_maternity @ disc), float(self.w_maternity_age @ disc)


def lotka_sharpe_integral(k: AgeProfile, mu: AgeProfile, zeta: float) -> float:
    """Discounted-reproduction integral F(zeta); F(0) is the reproduction number."""
    return LSKernel(k, mu).reproduction(zeta)


def growth_rate_bounds(k: AgeProfile, mu: AgeProfile) -> tuple[float, float]:
    """A-priori bracket [lower, upper] for the positive growth-rate root.

    lower = ln(R0)/A and upper = 2*sup(k)*ln(2*A*sup(k)).  Requires R0 > 1;
    otherwise the renewal condition has no positive root.
    """
    grid = _check_shared_grid(k, mu)
    r0 = LSKernel(k, mu).reproduction(0.0)
    if not r0 > 1.0:
        raise DomainError(
            f"net reproduction number {r0:.6g} <= 1: no positive growth rate"
            " (not in set B)"
        )
    area = grid.max_age
    lower = np.log(r0) / area
    k_sup = k.sup_norm()
    upper = 2.0 * k_sup * np.log(2.0 * area * k_sup)
    return float(lower), float(upper)


@dataclass(frozen=True)
class GrowthRateRoot:
    """Solved growth rate with residual and the a-priori bracket."""

    zeta: float
    residual: float
    lower_bound: float
    upper_bound: float
    iterations: int


def solve_growth_rate(
    k: AgeProfile,
    mu: AgeProfile,
    tol: float = DEFAULT_ROOT_TOL,
    max_iterations: int = MAX_ROOT_ITERATIONS,
) -> GrowthRateRoot:
    """Safeguarded Newton solve of F(zeta) = 1 inside the a-priori bracket.

    Newton steps zeta <- zeta + (F - 1)/kappa (the derivative is free via
    kappa = -F'); any step leaving the current sign-change bracket falls
    back to bisection, so convergence is global on the bracket.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    lower, upper = growth_rate_bounds(k, mu)
    kern = LSKernel(k, mu)
    lo, hi = lower, upper
    # The continuous-integral bracket can miss the discrete root by roundoff
    # in degenerate cases; widen rather than fail.
    while kern.reproduction(hi) > 1.0:
        hi *= 2.0
        if hi > 1e6:
            raise ConvergenceError("could not bracket the growth-rate root")
    z = lo
    for it in range(1, max_iterations + 1):
        f, kappa = kern.reproduction_and_slope(z)
        resid = f - 1.0
        if abs(resid) <= tol:
            return GrowthRateRoot(z, abs(resid), lower, upper, it)
        if resid > 0.0:
            lo = z
        else:
            hi = z
        z_newton = z + resid / kappa if kappa > 0.0 else lo - 1.0
        z = z_newton if lo < z_newton < hi else 0.5 * (lo + hi)
    raise ConvergenceError(
        f"growth-rate solve exceeded {max_iterations} iterations"
    )


def generation_time(k: AgeProfile, mu: AgeProfile, zeta: float) -> float:
    """kappa: age-weighted discounted reproduction, equal to -F'(zeta)."""
    return LSKernel(k, mu).reproduction_and_slope(zeta)[1]


def interaction_gain(g: AgeProfile, zeta: float, mu: AgeProfile) -> float:
    """gamma: interaction kernel discounted by growth and mortality."""
    grid = _check_shared_grid(g, mu)
    mort_cum = _cumtrapz(mu.values, grid.spacing)
    w = trapezoid_weights(grid)
    return float((w * g.values) @ np.exp(-zeta * grid.points - mort_cum))


def stable_profile(mu: AgeProfile, zeta: float) -> AgeProfile:
    """Normalized stable age distribution n(a) = exp(-zeta*a - integral mu)."""
    grid = mu.grid
    mort_cum = _cumtrapz(mu.values, grid.spacing)
    return AgeProfile(grid, np.exp(-zeta * grid.points - mort_cum))


def reproductive_value(k: AgeProfile, mu: AgeProfile, zeta: float) -> AgeProfile:
    """pi0: expected future discounted offspring of an age-a individual.

    pi0(a) = integral_a^A k(s) exp(-integral_a^s (zeta + mu)) ds, so
    pi0(A) = 0 and pi0(0) equals F(zeta), i.e. 1 at the solved root.
    """
    grid = _check_shared_grid(k, mu)
    mort_cum = _cumtrapz(mu.values, grid.spacing)
    n = np.exp(-zeta * grid.points - mort_cum)
    forward = _cumtrapz(k.values * n, grid.spacing)
    tail = forward[-1] - forward
    return AgeProfile(grid, tail / n)


# ---------------------------------------------------------------------------
# Certified Lipschitz constants for the operators over a bounded class.


@dataclass(frozen=True)
class LipschitzBounds:
    """Certified Lipschitz constants: L for the implicit root in (k, mu),
    and L_gamma/L_kappa/L_pi for the explicit operators in zeta."""

    L: float
    L_gamma: float
    L_kappa: float
    L_pi: float

    def __post_init__(self):
        for name in ("L", "L_gamma", "L_kappa", "L_pi"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite positive, got {v}")


def explicit_operator_lipschitz(
    sup_norm: float, max_age: float, zeta_max: float
) -> tuple[float, float, float]:
    """(L_gamma, L_kappa, L_pi) over the zeta interval [0-ish, zeta_max]."""
    e = np.exp(zeta_max * max_age)
    l_gamma = max_age * sup_norm * e
    l_kappa = max_age**2 * sup_norm * e
    l_pi = 0.5 * max_age**2 * sup_norm * e
    return float(l_gamma), float(l_kappa), float(l_pi)


def growth_rate_lipschitz_bounds(
    bounds: ClassBounds, g_sup: float = 1.0, zeta_max: float | None = None
) -> LipschitzBounds:
    """Evaluate the closed-form class constants.

    L divides by the worst-case age-weighted maternity and by ln of the
    floor reproduction number, so the class must satisfy that floor > 1.
    zeta_max defaults to the a-priori upper bound of the most fertile /
    least mortal member (k_max, mu_min).
    """
    grid = bounds.grid
    area = grid.max_age
    surv_floor = np.exp(-_cumtrapz(bounds.mu_max.values, grid.spacing))
    w = trapezoid_weights(grid)
    floor_repro = float((w * bounds.k_min.values) @ surv_floor)
    if not floor_repro > 1.0:
        raise DomainError(
            f"class floor reproduction number {floor_repro:.6g} <= 1:"
            " Lipschitz constant undefined"
        )
    aged = float((w * grid.points * bounds.k_min.values) @ surv_floor)
    k_sup = bounds.k_max.sup_norm()
    power = 2.0 * area * k_sup
    big_l = area * power ** (power - 1.0) / (aged * np.log(floor_repro))
    if zeta_max is None:
        zeta_max = growth_rate_bounds(bounds.k_max, bounds.mu_min)[1]
    l_gamma, _, _ = explicit_operator_lipschitz(g_sup, area, zeta_max)
    _, l_kappa, l_pi = explicit_operator_lipschitz(k_sup, area, zeta_max)
    return LipschitzBounds(float(big_l), l_gamma, l_kappa, l_pi)


def _pair_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def lipschitz_audit(
    bounds: ClassBounds,
    n_pairs: int,
    seed: int,
    lows: FamilyParams,
    highs: FamilyParams,
    tol: float = DEFAULT_ROOT_TOL,
) -> dict:
    """Empirical check of |dzeta| against the certified class bound.

    Draws pairs of family members from the parameter box [lows, highs],
    clips them pointwise into the class envelope, solves both roots, and
    reports the max ratio of |dzeta| to L*||dk||_inf + L*||k_max||_inf*A*||dmu||_inf.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    lips = growth_rate_lipschitz_bounds(bounds)
    k_sup = bounds.k_max.sup_norm()
    area = bounds.grid.max_age
    max_ratio = 0.0
    ratios = []
    skipped = 0
    for rng in _pair_rngs(seed, n_pairs):
        pair = []
        for _ in range(2):
            k, mu, _ = sample_family(_box_draw(rng, lows, highs), bounds.grid)
            k, mu = clip_to_class(bounds, k, mu)
            class_membership(bounds, k, mu)
            pair.append((k, mu, solve_growth_rate(k, mu, tol).zeta))
        (k1, m1, z1), (k2, m2, z2) = pair
        dk = float(np.abs(k1.values - k2.values).max())
        dm = float(np.abs(m1.values - m2.values).max())
        denom = lips.L * dk + lips.L * k_sup * area * dm
        if denom == 0.0:
            skipped += 1
            continue
        ratios.append(abs(z1 - z2) / denom)
        max_ratio = max(max_ratio, ratios[-1])
    return {
        "n_pairs": n_pairs,
        "seed": seed,
        "skipped_identical": skipped,
        "max_ratio": max_ratio,
        "mean_ratio": float(np.mean(ratios)) if ratios else 0.0,
        "L": lips.L,
        "bound_satisfied": max_ratio <= 1.0,
    }


def monotonicity_audit(
    bounds: ClassBounds,
    n_pairs: int,
    seed: int,
    lows: FamilyParams,
    highs: FamilyParams,
    tol: float = DEFAULT_ROOT_TOL,
) -> dict:
    """Ordered-pair check: raising k or lowering mu never lowers the root."""
    violations = 0
    worst = 0.0
    for rng in _pair_rngs(seed, n_pairs):
        k, mu, _ = sample_family(_box_draw(rng, lows, highs), bounds.grid)
        k, mu = clip_to_class(bounds, k, mu)
        t_k, t_m = rng.uniform(0.0, 1.0, size=2)
        k_up = AgeProfile(k.grid, k.values + t_k * (bounds.k_max.values - k.values))
        mu_dn = AgeProfile(mu.grid, mu.values - t_m * (mu.values - bounds.mu_min.values))
        z = solve_growth_rate(k, mu, tol).zeta
        z_up = solve_growth_rate(k_up, mu_dn, tol).zeta
        gap = z - z_up
        worst = max(worst, gap)
        if gap > 1e-10:
            violations += 1
    return {"n_pairs": n_pairs, "violations": violations, "worst_gap": worst}


def _box_draw(rng: np.random.Generator, lows: FamilyParams, highs: FamilyParams) -> FamilyParams:
    vals = {
        name: float(rng.uniform(getattr(lows, name), getattr(highs, name)))
        for name in lows.to_dict()
    }
    return FamilyParams(**vals)
