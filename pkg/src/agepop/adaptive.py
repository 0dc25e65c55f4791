"""Online estimation of fertility and mortality during closed-loop operation.

Fertility adapts by a gradient law on the renewal-boundary residual, which
is linear in the unknown kernel.  Mortality adapts through first-order
filters that turn the transport balance into a pointwise-in-age linear
regression Y = mu * sigma; the exponentially decaying initial-condition
term is kept exactly (it is cheap and removes startup bias).  Both
estimates are clamped nonnegative after every step.

The adaptive closed loop re-solves the growth rates from the current
estimates every step (exactly or through a surrogate), converts them into
the two scalar error channels, and drives the perturbed dilution law.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import ControllerConfig, hatted_quantities
from .dynamics import (
    PdeStepper,
    PopulationState,
    controller_from_ledger,
    lyapunov_quantities,
    lyapunov_value,
    radial_measure,
)
from .equilibrium import EquilibriumSpec, SpeciesSpec
from .errors import DomainError
from .grids import AgeGrid, AgeProfile, net_reproduction_number
from .operators import DEFAULT_ROOT_TOL, solve_growth_rate
from .surrogate import R0_ACCEPTANCE, SurrogateModel, evaluate_model


@dataclass(frozen=True)
class AdaptiveGains:
    """Update gains and filter poles (shared by both species by default)."""

    gamma_k: float = 10.0
    gamma_mu: float = 10.0
    alpha: float = 5.0

    def __post_init__(self):
        if self.gamma_k < 0 or self.gamma_mu < 0 or self.alpha <= 0:
            raise ValueError("gains must be nonnegative and alpha positive")


@dataclass
class AdaptiveState:
    """Mutable estimate and filter state owned by one simulation run."""

    grid: AgeGrid
    k_hat: list[np.ndarray]
    mu_hat: list[np.ndarray]
    sigma: list[np.ndarray]
    rho: list[np.ndarray]
    x_initial: list[np.ndarray]
    gains: AdaptiveGains
    clamp_events: int = 0

    @classmethod
    def from_profiles(cls, k_hats, mu_hats, x_initial, gains: AdaptiveGains):
        grid = k_hats[0].grid
        n = grid.n_points
        return cls(
            grid=grid,
            k_hat=[p.values.copy() for p in k_hats],
            mu_hat=[p.values.copy() for p in mu_hats],
            sigma=[np.zeros(n), np.zeros(n)],
            rho=[np.zeros(n), np.zeros(n)],
            x_initial=[x.values.copy() for x in x_initial],
            gains=gains,
        )

    def profiles(self, i: int) -> tuple[AgeProfile, AgeProfile]:
        return AgeProfile(self.grid, self.k_hat[i]), AgeProfile(self.grid, self.mu_hat[i])


def fertility_step(
    k_hat: np.ndarray,
    x: np.ndarray,
    weights: np.ndarray,
    gamma_k: float,
    dt: float,
) -> tuple[np.ndarray, float, int]:
    """Gradient step on the renewal residual x(0) - <k_hat, x>.

    Returns (updated estimate, residual, nodes clamped at zero).  The
    regressor is normalized by 1 + the squared population mass, so the
    step size is dimensionless.
    """
    residual = float(x[0] - weights @ (k_hat * x))
    norm = 1.0 + float(weights @ (x * x))
    new = k_hat + (dt * gamma_k * residual / norm) * x
    clamped = int(np.count_nonzero(new < 0.0))
    return np.maximum(new, 0.0), residual, clamped


def upwind_age_derivative(x: np.ndarray, h: float) -> np.ndarray:
    """One-sided difference aligned with transport (backward in age)."""
    out = np.empty_like(x)
    out[1:] = (x[1:] - x[:-1]) / h
    out[0] = (x[1] - x[0]) / h
    return out


def mortality_filter_step(
    sigma: np.ndarray,
    rho: np.ndarray,
    mu_hat: np.ndarray,
    x: np.ndarray,
    r: np.ndarray,
    x_initial: np.ndarray,
    t: float,
    dt: float,
    alpha: float,
    gamma_mu: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    """Synchronous Euler step of the filtered pointwise regression.

    Y = rho - x + alpha*sigma + e^{-alpha t} x0 satisfies Y = mu*sigma on
    exact data; the estimate descends the instantaneous regression cost.
    Returns (sigma, rho, mu_hat, innovation, nodes clamped) at t + dt.
    """
    y = rho - x + alpha * sigma + np.exp(-alpha * t) * x_initial
    innovation = y - mu_hat * sigma
    raw = mu_hat + dt * gamma_mu * sigma / (1.0 + sigma**2) * innovation
    clamped = int(np.count_nonzero(raw < 0.0))
    sigma_new = sigma + dt * (-alpha * sigma + x)
    rho_new = rho + dt * (-alpha * rho + r)
    return sigma_new, rho_new, np.maximum(raw, 0.0), innovation, clamped


def transport_residuals(
    x1: np.ndarray,
    x2: np.ndarray,
    u: float,
    g1: np.ndarray,
    g2: np.ndarray,
    weights: np.ndarray,
    h: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Known parts r_i of the balance  dx_i/dt = r_i - mu_i * x_i.

    r_i = -d x_i/da - [u + interaction_i] * x_i, with the interaction the
    prey-loss integral for species 1 and the reciprocal prey pool for
    species 2.
    """
    prey_loss = float(weights @ (g1 * x2))
    pool = float(weights @ (g2 * x1))
    if pool < 1e-12:
        raise DomainError("prey pool too small to form the predator residual")
    r1 = -upwind_age_derivative(x1, h) - (u + prey_loss) * x1
    r2 = -upwind_age_derivative(x2, h) - (u + 1.0 / pool) * x2
    return r1, r2


def update_estimates(
    state: AdaptiveState,
    x1: np.ndarray,
    x2: np.ndarray,
    u: float,
    t: float,
    dt: float,
    g1: np.ndarray,
    g2: np.ndarray,
    weights: np.ndarray,
    h: float,
) -> dict:
    """One adaptation step for both species; returns residual diagnostics.

    Estimates are clamped nonnegative; clamp activations are counted on
    the state (monitored, not asserted: they should not fire for
    nonnegative truth and defaults).
    """
    gains = state.gains
    resids = {}
    for i, x in enumerate((x1, x2)):
        state.k_hat[i], resid, clamped = fertility_step(
            state.k_hat[i], x, weights, gains.gamma_k, dt
        )
        state.clamp_events += clamped
        resids[f"boundary_residual_{i + 1}"] = resid
    r1, r2 = transport_residuals(x1, x2, u, g1, g2, weights, h)
    for i, (x, r) in enumerate(((x1, r1), (x2, r2))):
        (state.sigma[i], state.rho[i], state.mu_hat[i], innov,
         clamped) = mortality_filter_step(
            state.sigma[i], state.rho[i], state.mu_hat[i],
            x, r, state.x_initial[i], t, dt, gains.alpha, gains.gamma_mu,
        )
        state.clamp_events += clamped
        resids[f"innovation_sup_{i + 1}"] = float(np.abs(innov).max())
    return resids


@dataclass
class AdaptiveTrajectory:
    """Recorded adaptive run: reduced coordinates plus estimate diagnostics."""

    t: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    u: np.ndarray
    v1: np.ndarray
    r: np.ndarray
    x1_boundary: np.ndarray
    x2_boundary: np.ndarray
    zeta1_hat: np.ndarray
    zeta2_hat: np.ndarray
    k1_err_sup: np.ndarray
    k2_err_sup: np.ndarray
    mu1_err_sup: np.ndarray
    mu2_err_sup: np.ndarray
    boundary_pred_err_1: np.ndarray
    boundary_pred_err_2: np.ndarray
    clamp_events: int
    surrogate_fallbacks: int
    estimate_clamp_events: int
    final_state: PopulationState
    estimate_snapshots: list = field(default_factory=list)


class GrowthRateSource:
    """Resolves growth rates from estimates: exact solver or surrogate.

    Surrogate inputs outside the training class (R0 <= 1.2) fall back to
    the exact solver; if even the exact domain is lost (R0 <= 1) the last
    valid value is held.  Both events count as fallbacks.
    """

    def __init__(self, model: SurrogateModel | None = None,
                 tol: float = DEFAULT_ROOT_TOL):
        self.model = model
        self.tol = tol
        self.fallbacks = 0
        self.last = [None, None]

    def resolve(self, i: int, k: AgeProfile, mu: AgeProfile) -> float:
        r0 = net_reproduction_number(k, mu)
        if self.model is not None and r0 > R0_ACCEPTANCE:
            value = evaluate_model(self.model, k, mu)
        elif r0 > 1.0:
            if self.model is not None:
                self.fallbacks += 1
            value = solve_growth_rate(k, mu, self.tol).zeta
        else:
            self.fallbacks += 1
            if self.last[i] is None:
                raise DomainError(
                    f"initial estimates for species {i + 1} have R0 = {r0:g} <= 1"
                )
            return self.last[i]
        self.last[i] = value
        return value


def simulate_adaptive(
    ic: PopulationState,
    initial_k_hats,
    initial_mu_hats,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
    horizon: float,
    gains: AdaptiveGains = AdaptiveGains(),
    model: SurrogateModel | None = None,
    record_every: int = 1,
    snapshot_times: np.ndarray | None = None,
    tol: float = DEFAULT_ROOT_TOL,
) -> AdaptiveTrajectory:
    """Adaptive closed loop: estimate, resolve growth rates, control, advance.

    Per step: the growth rates are re-solved from the current estimates,
    converted to the scalar error channels e_i = zeta_i - zeta_i_hat, the
    perturbed dilution law is evaluated and clamped, the estimates adapt
    on the measured state, and the transport PDE advances one cell.
    `snapshot_times` requests (time, species, estimates, label) records
    for dataset harvesting.
    """
    stepper = PdeStepper(prey, predator)
    h = stepper.h
    w = stepper.w
    lq = lyapunov_quantities(eq, cfg, prey, predator)
    n_steps = int(round(horizon / h))
    state = AdaptiveState.from_profiles(
        initial_k_hats, initial_mu_hats, (ic.x1, ic.x2), gains
    )
    source = GrowthRateSource(model, tol)
    kappa1 = eq.x1_star0 * prey.kappa
    kappa2 = eq.x2_star0 * predator.kappa
    pi1 = prey.pi0.values
    pi2 = predator.pi0.values

    snap_steps = set()
    if snapshot_times is not None:
        snap_steps = {int(round(float(ts) / h)) for ts in snapshot_times}

    n_rec = n_steps // record_every + 1
    cols = {
        name: np.empty(n_rec)
        for name in (
            "t", "eta1", "eta2", "u", "x1_boundary", "x2_boundary",
            "zeta1_hat", "zeta2_hat", "k1_err_sup", "k2_err_sup",
            "mu1_err_sup", "mu2_err_sup",
            "boundary_pred_err_1", "boundary_pred_err_2",
        )
    }
    clamp_events = 0
    snapshots = []
    pop = ic
    idx = 0
    for step in range(n_steps + 1):
        x1 = pop.x1.values
        x2 = pop.x2.values
        k1_hat, mu1_hat = state.profiles(0)
        k2_hat, mu2_hat = state.profiles(1)
        z1h = source.resolve(0, k1_hat, mu1_hat)
        z2h = source.resolve(1, k2_hat, mu2_hat)
        ledger = hatted_quantities(
            prey.zeta - z1h, predator.zeta - z2h, prey, predator, eq, cfg
        )
        w1 = float(w @ (pi1 * x1))
        w2 = float(w @ (pi2 * x2))
        if w1 <= 0.0 or w2 <= 0.0:
            raise DomainError("weighted population collapsed during adaptation")
        eta1 = float(np.log(w1 / kappa1))
        eta2 = float(np.log(w2 / kappa2))
        u_raw = float(controller_from_ledger(ledger, cfg)(eta1, eta2))
        if u_raw < 0.0:
            clamp_events += 1
            u = 0.0
        else:
            u = u_raw

        if step % record_every == 0:
            cols["t"][idx] = pop.t
            cols["eta1"][idx] = eta1
            cols["eta2"][idx] = eta2
            cols["u"][idx] = u
            cols["x1_boundary"][idx] = x1[0]
            cols["x2_boundary"][idx] = x2[0]
            cols["zeta1_hat"][idx] = z1h
            cols["zeta2_hat"][idx] = z2h
            cols["k1_err_sup"][idx] = np.abs(state.k_hat[0] - prey.k.values).max()
            cols["k2_err_sup"][idx] = np.abs(state.k_hat[1] - predator.k.values).max()
            cols["mu1_err_sup"][idx] = np.abs(state.mu_hat[0] - prey.mu.values).max()
            cols["mu2_err_sup"][idx] = np.abs(state.mu_hat[1] - predator.mu.values).max()
            cols["boundary_pred_err_1"][idx] = abs(
                x1[0] - float(w @ (state.k_hat[0] * x1))
            )
            cols["boundary_pred_err_2"][idx] = abs(
                x2[0] - float(w @ (state.k_hat[1] * x2))
            )
            idx += 1
        if step in snap_steps:
            for i, (kh, mh, zh) in enumerate(
                ((k1_hat, mu1_hat, z1h), (k2_hat, mu2_hat, z2h))
            ):
                snapshots.append(
                    {
                        "t": pop.t,
                        "species": i + 1,
                        "k_hat": kh.values.copy(),
                        "mu_hat": mh.values.copy(),
                        "zeta_hat": zh,
                        "r0": net_reproduction_number(kh, mh),
                    }
                )

        if step < n_steps:
            update_estimates(
                state, x1, x2, u, pop.t, h,
                prey.g.values, predator.g.values, w, h,
            )
            pop = stepper.step(pop, u)

    cols = {name: arr[:idx] for name, arr in cols.items()}
    return AdaptiveTrajectory(
        t=cols["t"],
        eta1=cols["eta1"],
        eta2=cols["eta2"],
        u=cols["u"],
        v1=np.asarray(lyapunov_value(cols["eta1"], cols["eta2"], lq)),
        r=np.asarray(radial_measure(cols["eta1"], cols["eta2"], lq)),
        x1_boundary=cols["x1_boundary"],
        x2_boundary=cols["x2_boundary"],
        zeta1_hat=cols["zeta1_hat"],
        zeta2_hat=cols["zeta2_hat"],
        k1_err_sup=cols["k1_err_sup"],
        k2_err_sup=cols["k2_err_sup"],
        mu1_err_sup=cols["mu1_err_sup"],
        mu2_err_sup=cols["mu2_err_sup"],
        boundary_pred_err_1=cols["boundary_pred_err_1"],
        boundary_pred_err_2=cols["boundary_pred_err_2"],
        clamp_events=clamp_events,
        surrogate_fallbacks=source.fallbacks,
        estimate_clamp_events=state.clamp_events,
        final_state=pop,
        estimate_snapshots=snapshots,
    )
