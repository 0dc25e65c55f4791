"""Time-domain simulation: reduced log-deviation ODE and the full transport PDE.

The reduced model lives in the 2-D log-deviation coordinates:

    deta1/dt = u* - u - b*(e^{eta2} - 1)
    deta2/dt = u* - u - a*(e^{-eta1} - 1)

(equivalently eta1' = zeta1 - b e^{eta2} - u, eta2' = zeta2 - a e^{-eta1} - u),
integrated with the classical 4th-order one-step method.  expm1 keeps the
Lyapunov value and restoring terms accurate near the equilibrium.

The PDE scheme is characteristic-aligned: with dt equal to the age spacing,
transport is exact and each cell decays by the exponential of its midpoint
loss rate, which keeps densities positive structurally.  The renewal
boundary value solves the one-point-implicit trapezoid identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import (
    ClampCounter,
    ControllerConfig,
    LogDeviations,
    PerturbationLedger,
    zero_ledger,
)
from .equilibrium import EquilibriumSpec, SpeciesSpec
from .errors import BlowupError, DomainError, ExtinctionError
from .grids import AgeProfile, trapezoid_weights

BLOWUP_LIMIT = 1e6
DEFAULT_ODE_DT = 1e-3


@dataclass(frozen=True)
class LyapunovQuantities:
    """Gains, rate matrix, and scalar constants of the stability analysis."""

    a_gain: float
    b_gain: float
    beta: float
    epsilon: float
    zeta1: float
    zeta2: float
    u_star: float
    Q: np.ndarray
    lambda_star: float
    c_eps: float


def rate_matrix(beta: float, epsilon: float) -> tuple[np.ndarray, float]:
    """Lyapunov-rate matrix Q and its smallest eigenvalue for raw gains.

    The off-diagonal is (2*beta*(1+eps) - eps)/2, which makes
    dV1/dt = -[phi1 phi2] Q [phi1 phi2]^T hold along the nominal loop;
    det Q = eps*(4*beta*(1+eps) - eps)/4 either way, so the eigenvalue is
    positive iff beta > eps/(4*(1+eps)).
    """
    off = 0.5 * (2.0 * beta * (1.0 + epsilon) - epsilon)
    q = np.array([[beta, off], [off, beta * (1.0 + epsilon) ** 2]])
    q.flags.writeable = False
    tr = q[0, 0] + q[1, 1]
    det = q[0, 0] * q[1, 1] - off * off
    return q, float(0.5 * (tr - np.sqrt(tr * tr - 4.0 * det)))


def lyapunov_quantities(eq: EquilibriumSpec, cfg: ControllerConfig,
                        prey: SpeciesSpec, predator: SpeciesSpec
                        ) -> LyapunovQuantities:
    """Assemble the gain pair, rate matrix, and envelope constants."""
    beta, eps = cfg.beta, cfg.epsilon
    a = 1.0 / (eq.x1_star0 * eq.gamma2)
    b = eq.gamma1 * eq.x2_star0
    q, lambda_star = rate_matrix(beta, eps)
    return LyapunovQuantities(
        a_gain=a,
        b_gain=b,
        beta=beta,
        epsilon=eps,
        zeta1=prey.zeta,
        zeta2=predator.zeta,
        u_star=eq.u_star,
        Q=q,
        lambda_star=lambda_star,
        c_eps=float(np.sqrt(1.0 + (1.0 + eps) ** 2)),
    )


def restoring_terms(eta1, eta2, lq: LyapunovQuantities):
    """(phi1, phi2) = (a*(1 - e^{-eta1}), b*(e^{eta2} - 1)); accepts arrays."""
    return -lq.a_gain * np.expm1(-np.asarray(eta1)), lq.b_gain * np.expm1(
        np.asarray(eta2)
    )


def radial_measure(eta1, eta2, lq: LyapunovQuantities):
    """r = sqrt(phi1^2 + phi2^2); the distance measure of the certificates."""
    p1, p2 = restoring_terms(eta1, eta2, lq)
    return np.hypot(p1, p2)


def lyapunov_value(eta1, eta2, lq: LyapunovQuantities):
    """V1 = a*(e^{-eta1} + eta1 - 1) + (1+eps)*b*(e^{eta2} - eta2 - 1)."""
    e1 = np.asarray(eta1)
    e2 = np.asarray(eta2)
    return lq.a_gain * (np.expm1(-e1) + e1) + (1.0 + lq.epsilon) * lq.b_gain * (
        np.expm1(e2) - e2
    )


def lyapunov_gradient(eta1, eta2, lq: LyapunovQuantities):
    """(dV1/deta1, dV1/deta2) = (phi1, (1+eps)*phi2)."""
    p1, p2 = restoring_terms(eta1, eta2, lq)
    return p1, (1.0 + lq.epsilon) * p2


def eta_rhs(eta1, eta2, u, lq: LyapunovQuantities):
    """Reduced-model right-hand side at dilution u; accepts arrays."""
    p1, p2 = restoring_terms(eta1, eta2, lq)
    drive = lq.u_star - np.asarray(u)
    return drive - p2, drive + p1


def controller_from_ledger(ledger: PerturbationLedger, cfg: ControllerConfig):
    """Vectorized raw dilution command u(eta1, eta2) = C0 + C1 e^{-eta1} + C2 e^{eta2}."""
    eps = cfg.epsilon
    c0 = ledger.zeta2_hat - ledger.a_hat + cfg.beta * (
        (1.0 + eps) * (ledger.zeta2_hat - ledger.zeta1_hat) - eps * ledger.a_hat
    )
    c1 = -cfg.beta * ledger.m1_hat
    c2 = cfg.beta * (1.0 + eps) * ledger.m2_hat

    def u_raw(eta1, eta2):
        return c0 + c1 * np.exp(-eta1) + c2 * np.exp(eta2)

    return u_raw


@dataclass
class EtaTrajectory:
    """Recorded reduced-model run; arrays indexed (time,) or (time, batch)."""

    t: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    u: np.ndarray
    v1: np.ndarray
    r: np.ndarray
    clamp_events: int


def integrate_eta(
    eta0,
    horizon: float,
    dt: float,
    controller,
    lq: LyapunovQuantities,
    record_every: int = 1,
) -> EtaTrajectory:
    """Fixed-step 4th-order integration of the controlled reduced model.

    `controller` maps (eta1, eta2) arrays to the raw dilution command;
    the command is clamped at zero at every stage evaluation.  `eta0` may
    be a single state (2,) or a batch (m, 2); batch runs share the clock.
    Raises BlowupError when any |eta| exceeds 1e6.
    """
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be positive")
    if isinstance(eta0, LogDeviations):
        eta0 = eta0.as_array()
    eta0 = np.asarray(eta0, dtype=float)
    squeeze = eta0.ndim == 1
    eta0 = np.atleast_2d(eta0)
    if eta0.shape[1] != 2:
        raise ValueError(f"eta0 must have shape (2,) or (m, 2), got {eta0.shape}")
    n_steps = int(round(horizon / dt))
    counter = ClampCounter()

    def rhs(e1, e2):
        u = np.maximum(controller(e1, e2), 0.0)
        d1, d2 = eta_rhs(e1, e2, u, lq)
        return d1, d2

    n_rec = n_steps // record_every + 1
    m = eta0.shape[0]
    t_out = np.empty(n_rec)
    e1_out = np.empty((n_rec, m))
    e2_out = np.empty((n_rec, m))
    u_out = np.empty((n_rec, m))

    e1 = eta0[:, 0].copy()
    e2 = eta0[:, 1].copy()

    def record(idx, step):
        u_raw = controller(e1, e2)
        counter.count += int(np.count_nonzero(u_raw < 0.0))
        t_out[idx] = step * dt
        e1_out[idx] = e1
        e2_out[idx] = e2
        u_out[idx] = np.maximum(u_raw, 0.0)

    record(0, 0)
    idx = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            k1a, k1b = rhs(e1, e2)
            k2a, k2b = rhs(e1 + 0.5 * dt * k1a, e2 + 0.5 * dt * k1b)
            k3a, k3b = rhs(e1 + 0.5 * dt * k2a, e2 + 0.5 * dt * k2b)
            k4a, k4b = rhs(e1 + dt * k3a, e2 + dt * k3b)
            e1 = e1 + (dt / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            e2 = e2 + (dt / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
            if not (
                np.max(np.abs(e1)) <= BLOWUP_LIMIT
                and np.max(np.abs(e2)) <= BLOWUP_LIMIT
            ):
                raise BlowupError(
                    f"log deviation exceeded {BLOWUP_LIMIT:g} at step {step}"
                )
            if step % record_every == 0:
                record(idx, step)
                idx += 1

    e1_rec = e1_out[:idx]
    e2_rec = e2_out[:idx]
    v1 = lyapunov_value(e1_rec, e2_rec, lq)
    r = radial_measure(e1_rec, e2_rec, lq)
    out = [t_out[:idx], e1_rec, e2_rec, u_out[:idx], v1, r]
    if squeeze:
        out = [out[0]] + [arr[:, 0] for arr in out[1:]]
    return EtaTrajectory(*out, clamp_events=counter.count)


# ---------------------------------------------------------------------------
# Full transport PDE.


@dataclass(frozen=True)
class PopulationState:
    """Population densities of both species at one instant."""

    x1: AgeProfile
    x2: AgeProfile
    t: float = 0.0

    def __post_init__(self):
        if self.x1.grid != self.x2.grid:
            raise ValueError("both species must share the age grid")
        if self.t < 0:
            raise ValueError("time must be nonnegative")


class PdeStepper:
    """Characteristic-aligned exponential stepper with cached static factors."""

    def __init__(self, prey: SpeciesSpec, predator: SpeciesSpec):
        if prey.grid != predator.grid:
            raise ValueError("species grids differ")
        self.grid = prey.grid
        self.h = self.grid.spacing
        self.w = trapezoid_weights(self.grid)
        # Mortality at cell midpoints (profiles are piecewise linear).
        self.mu_mid = tuple(
            0.5 * (sp.mu.values[:-1] + sp.mu.values[1:]) for sp in (prey, predator)
        )
        self.k = (prey.k.values, predator.k.values)
        self.g = (prey.g.values, predator.g.values)
        for kv in self.k:
            if 0.5 * self.h * kv[0] >= 1.0:
                raise DomainError("grid too coarse for the implicit renewal node")

    def interactions(self, x1: np.ndarray, x2: np.ndarray) -> tuple[float, float]:
        """Loss-rate couplings at the current state (explicit in time)."""
        prey_loss = float(self.w @ (self.g[0] * x2))
        predation_pool = float(self.w @ (self.g[1] * x1))
        if predation_pool < 1e-12:
            raise ExtinctionError(
                f"prey pool integral {predation_pool:g} below 1e-12"
            )
        return prey_loss, 1.0 / predation_pool

    def step_species(self, x: np.ndarray, loss_rate_mid: np.ndarray,
                     k: np.ndarray) -> np.ndarray:
        new = np.empty_like(x)
        new[1:] = x[:-1] * np.exp(-self.h * loss_rate_mid)
        # Renewal: x(0) appears inside its own trapezoid integral.
        tail = float((self.w[1:] * k[1:]) @ new[1:])
        new[0] = tail / (1.0 - self.w[0] * k[0])
        return new

    def step(self, state: PopulationState, u: float) -> PopulationState:
        x1 = state.x1.values
        x2 = state.x2.values
        prey_loss, pred_loss = self.interactions(x1, x2)
        new1 = self.step_species(x1, self.mu_mid[0] + u + prey_loss, self.k[0])
        new2 = self.step_species(x2, self.mu_mid[1] + u + pred_loss, self.k[1])
        return PopulationState(
            x1=AgeProfile(self.grid, new1),
            x2=AgeProfile(self.grid, new2),
            t=state.t + self.h,
        )


def pde_step(state: PopulationState, u: float, prey: SpeciesSpec,
             predator: SpeciesSpec, dt: float) -> PopulationState:
    """Single characteristic-aligned step; dt must equal the grid spacing."""
    stepper = PdeStepper(prey, predator)
    if not np.isclose(dt, stepper.h, rtol=1e-12):
        raise ValueError(f"dt = {dt:g} must equal the grid spacing {stepper.h:g}")
    return stepper.step(state, u)


@dataclass
class PdeTrajectory:
    """Recorded PDE run (boundary values, totals, and reduced coordinates)."""

    t: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    u: np.ndarray
    v1: np.ndarray
    r: np.ndarray
    x1_boundary: np.ndarray
    x2_boundary: np.ndarray
    x1_total: np.ndarray
    x2_total: np.ndarray
    clamp_events: int
    final_state: PopulationState


def simulate_closed_loop_pde(
    ic: PopulationState,
    horizon: float,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
    ledger: PerturbationLedger | None = None,
    record_every: int = 1,
) -> PdeTrajectory:
    """Closed-loop transport simulation under the (possibly perturbed) law.

    At each step the log deviations are measured from the densities, the
    dilution command is evaluated through the ledger (zero ledger = exact
    growth rates), clamped at zero, and the PDE advanced by one grid cell.
    """
    if ledger is None:
        ledger = zero_ledger(prey, predator, eq, cfg)
    lq = lyapunov_quantities(eq, cfg, prey, predator)
    stepper = PdeStepper(prey, predator)
    n_steps = int(round(horizon / stepper.h))
    counter = ClampCounter()
    w = stepper.w

    n_rec = n_steps // record_every + 1
    cols = {
        name: np.empty(n_rec)
        for name in (
            "t", "eta1", "eta2", "u", "x1_boundary", "x2_boundary",
            "x1_total", "x2_total",
        )
    }

    kappa1 = eq.x1_star0 * prey.kappa
    kappa2 = eq.x2_star0 * predator.kappa
    pi1 = prey.pi0.values
    pi2 = predator.pi0.values
    u_coeffs = controller_from_ledger(ledger, cfg)

    state = ic
    idx = 0
    for step in range(n_steps + 1):
        x1 = state.x1.values
        x2 = state.x2.values
        w1 = float(w @ (pi1 * x1))
        w2 = float(w @ (pi2 * x2))
        if w1 <= 0.0 or w2 <= 0.0:
            raise DomainError("weighted population collapsed to zero")
        eta1 = np.log(w1 / kappa1)
        eta2 = np.log(w2 / kappa2)
        u_raw = float(u_coeffs(eta1, eta2))
        if u_raw < 0.0:
            counter.count += 1
            u = 0.0
        else:
            u = u_raw
        if step % record_every == 0:
            cols["t"][idx] = state.t
            cols["eta1"][idx] = eta1
            cols["eta2"][idx] = eta2
            cols["u"][idx] = u
            cols["x1_boundary"][idx] = x1[0]
            cols["x2_boundary"][idx] = x2[0]
            cols["x1_total"][idx] = float(w @ x1)
            cols["x2_total"][idx] = float(w @ x2)
            idx += 1
        if step < n_steps:
            state = stepper.step(state, u)

    cols = {name: arr[:idx] for name, arr in cols.items()}
    v1 = lyapunov_value(cols["eta1"], cols["eta2"], lq)
    r = radial_measure(cols["eta1"], cols["eta2"], lq)
    return PdeTrajectory(
        t=cols["t"],
        eta1=cols["eta1"],
        eta2=cols["eta2"],
        u=cols["u"],
        v1=v1,
        r=r,
        x1_boundary=cols["x1_boundary"],
        x2_boundary=cols["x2_boundary"],
        x1_total=cols["x1_total"],
        x2_total=cols["x2_total"],
        clamp_events=counter.count,
        final_state=state,
    )


def manifold_state(
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    eta: LogDeviations,
    t: float = 0.0,
) -> PopulationState:
    """Population state on the reduction manifold at given log deviations."""
    c1 = eq.x1_star0 * np.exp(eta.eta1)
    c2 = eq.x2_star0 * np.exp(eta.eta2)
    return PopulationState(
        x1=AgeProfile(prey.grid, c1 * prey.n_profile.values),
        x2=AgeProfile(predator.grid, c2 * predator.n_profile.values),
        t=t,
    )
