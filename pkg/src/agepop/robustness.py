"""Certified level sets, perturbation bounds, and robustness sweeps.

The certificate pipeline: find the largest Lyapunov level c whose sublevel
set both stays inside the region where the restoring terms are invertible
(r < min(a, b)) and keeps the perturbed dilution nonnegative for every
error in the l1 budget ball; then evaluate the closed-form decay envelope
(amplitude sqrt(M_c/m_c), rate lambda*/(4 M_c)) and the residual radius
mu_c = (c_eps/lambda*) sqrt(M_c/m_c) C_R delta.

The level sets are star-shaped about the origin (the Lyapunov value is
strictly increasing along rays), and in (e^{-eta1}, e^{eta2}) coordinates
they are convex while the control law is affine, so boundary-ray sampling
plus a coarse interior grid makes the nonnegativity check sound up to ray
resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import (
    ControllerConfig,
    PerturbationLedger,
    hatted_quantities,
)
from .dynamics import (
    LyapunovQuantities,
    controller_from_ledger,
    integrate_eta,
    lyapunov_value,
    radial_measure,
)
from .equilibrium import EquilibriumSpec, SpeciesSpec
from .errors import CertificateError, DomainError
from .grids import integrate
from .operators import (
    explicit_operator_lipschitz,
    generation_time,
    interaction_gain,
    reproductive_value,
)

DEFAULT_N_RAYS = 256
LEVEL_TOL = 1e-10


def level_set_boundary(
    c: float, lq: LyapunovQuantities, n_rays: int = DEFAULT_N_RAYS
) -> np.ndarray:
    """Points on {V1 = c}, one per ray direction, |V1 - c| <= 1e-10.

    Along every ray from the origin V1 is strictly increasing and diverges,
    so scalar bisection in the radius is exact up to tolerance.
    """
    if not c > 0:
        raise ValueError("level must be positive")
    theta = np.linspace(0.0, 2.0 * np.pi, n_rays, endpoint=False)
    d1 = np.cos(theta)
    d2 = np.sin(theta)

    hi = np.full(n_rays, 1.0)
    for _ in range(200):
        grow = lyapunov_value(hi * d1, hi * d2, lq) < c
        if not grow.any():
            break
        hi[grow] *= 2.0
    lo = np.zeros(n_rays)
    val = np.zeros(n_rays)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = lyapunov_value(mid * d1, mid * d2, lq)
        high = val > c
        hi[high] = mid[high]
        lo[~high] = mid[~high]
        if np.abs(val - c).max() <= LEVEL_TOL:
            break
    mid = 0.5 * (lo + hi)
    return np.column_stack([mid * d1, mid * d2])


def max_radial_on_level(c: float, lq: LyapunovQuantities,
                        n_rays: int = DEFAULT_N_RAYS) -> float:
    """R(c): the largest restoring radius r attained on the sublevel set.

    r is nondecreasing along rays, so the maximum over the star-shaped
    sublevel set is attained on its boundary.
    """
    pts = level_set_boundary(c, lq, n_rays)
    return float(radial_measure(pts[:, 0], pts[:, 1], lq).max())


def _error_ball_samples(delta: float, n_grid: int = 9) -> np.ndarray:
    """l1-ball samples: 4 vertices, 4 edge midpoints, masked interior grid."""
    if delta == 0.0:
        return np.zeros((1, 2))
    pts = [
        (delta, 0.0), (-delta, 0.0), (0.0, delta), (0.0, -delta),
        (delta / 2, delta / 2), (delta / 2, -delta / 2),
        (-delta / 2, delta / 2), (-delta / 2, -delta / 2),
    ]
    axis = np.linspace(-delta, delta, n_grid)
    g1, g2 = np.meshgrid(axis, axis)
    inside = np.abs(g1) + np.abs(g2) <= delta + 1e-15
    grid_pts = np.column_stack([g1[inside], g2[inside]])
    return np.unique(np.vstack([np.array(pts), grid_pts]), axis=0)


def _ball_ledgers(
    delta: float,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
    n_grid: int = 9,
) -> list[PerturbationLedger]:
    return [
        hatted_quantities(float(e1), float(e2), prey, predator, eq, cfg)
        for e1, e2 in _error_ball_samples(delta, n_grid)
    ]


def _affine_coefficients(ledgers, cfg: ControllerConfig) -> np.ndarray:
    """Rows (C0, C1, C2) of u = C0 + C1*e^{-eta1} + C2*e^{eta2} per ledger."""
    eps = cfg.epsilon
    rows = []
    for led in ledgers:
        c0 = led.zeta2_hat - led.a_hat + cfg.beta * (
            (1.0 + eps) * (led.zeta2_hat - led.zeta1_hat) - eps * led.a_hat
        )
        rows.append((c0, -cfg.beta * led.m1_hat, cfg.beta * (1.0 + eps) * led.m2_hat))
    return np.array(rows)


def min_dilution_over_level(
    c: float,
    lq: LyapunovQuantities,
    coeff: np.ndarray,
    n_rays: int = DEFAULT_N_RAYS,
    n_interior: int = 17,
) -> float:
    """min over the sublevel set and all sampled ledgers of the raw command.

    The law is affine in (X, Y) = (e^{-eta1}, e^{eta2}) and the sublevel
    set is convex in those coordinates, so boundary extremes dominate; a
    coarse interior grid guards the sampling.
    """
    pts = level_set_boundary(c, lq, n_rays)
    x = np.exp(-pts[:, 0])
    y = np.exp(pts[:, 1])
    xs = np.linspace(x.min(), x.max(), n_interior)
    ys = np.linspace(y.min(), y.max(), n_interior)
    gx, gy = np.meshgrid(xs, ys)
    # interior points back in eta coordinates, masked to the sublevel set
    ge1 = -np.log(gx)
    ge2 = np.log(gy)
    mask = lyapunov_value(ge1, ge2, lq) <= c
    all_x = np.concatenate([x, gx[mask]])
    all_y = np.concatenate([y, gy[mask]])
    vals = coeff[:, 0:1] + np.outer(coeff[:, 1], all_x) + np.outer(coeff[:, 2], all_y)
    return float(vals.min())


def level_feasible(
    c: float,
    lq: LyapunovQuantities,
    coeff: np.ndarray,
    n_rays: int = DEFAULT_N_RAYS,
) -> bool:
    """Certified-level test: sublevel set inside D* and command nonnegative."""
    if max_radial_on_level(c, lq, n_rays) >= min(lq.a_gain, lq.b_gain):
        return False
    return min_dilution_over_level(c, lq, coeff, n_rays) >= 0.0


def certified_level(
    delta: float,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
    n_rays: int = DEFAULT_N_RAYS,
    rel_tol: float = 1e-3,
) -> float:
    """c*_delta: largest feasible Lyapunov level for the error budget delta.

    Outer bisection between the largest known-feasible and smallest known-
    infeasible levels; returns the feasible endpoint.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    lq_local = _lq(eq, cfg, prey, predator)
    coeff = _affine_coefficients(
        _ball_ledgers(delta, prey, predator, eq, cfg), cfg
    )
    lo = 1e-9
    if not level_feasible(lo, lq_local, coeff, n_rays):
        raise CertificateError(
            f"no certifiable level at delta = {delta:g}: even c = {lo:g} fails"
        )
    hi = lo
    while level_feasible(hi * 2.0, lq_local, coeff, n_rays):
        hi *= 2.0
        if hi > 1e6:
            return hi
    lo, hi = hi, hi * 2.0
    while (hi - lo) / lo > rel_tol:
        mid = 0.5 * (lo + hi)
        if level_feasible(mid, lq_local, coeff, n_rays):
            lo = mid
        else:
            hi = mid
    return lo


def _lq(eq, cfg, prey, predator) -> LyapunovQuantities:
    from .dynamics import lyapunov_quantities

    return lyapunov_quantities(eq, cfg, prey, predator)


# ---------------------------------------------------------------------------
# Perturbation bound C_R: empirical ratio and the constructive constant.


def constructive_perturbation_bound(
    radius: float,
    delta: float,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
) -> float:
    """Closed-form C_R from operator Lipschitz constants and monotone extremes.

    Valid for all states with r <= radius and errors with |e1|+|e2| <= delta.
    Raises DomainError when the budget drives a hatted denominator toward 0.
    """
    a = 1.0 / (eq.x1_star0 * eq.gamma2)
    b = eq.gamma1 * eq.x2_star0
    if not radius < min(a, b):
        raise DomainError(f"radius {radius:g} must stay below min(a, b) = {min(a, b):g}")
    area = prey.grid.max_age
    z1, z2 = prey.zeta, predator.zeta

    l_gamma2, _, _ = explicit_operator_lipschitz(
        predator.g.sup_norm(), area, z1 + delta
    )
    _, l_kappa1, l_pi1 = explicit_operator_lipschitz(prey.k.sup_norm(), area, z1 + delta)
    l_gamma1, _, _ = explicit_operator_lipschitz(prey.g.sup_norm(), area, z2 + delta)
    _, l_kappa2, l_pi2 = explicit_operator_lipschitz(
        predator.k.sup_norm(), area, z2 + delta
    )

    # monotone extremes over the shifted-rate intervals (exact evaluations)
    gamma2_floor = interaction_gain(predator.g, z1 + delta, prey.mu)
    kappa1_ceil = generation_time(prey.k, prey.mu, z1 - delta)
    kappa2_floor = generation_time(predator.k, predator.mu, z2 + delta)
    gamma1_ceil = interaction_gain(prey.g, z2 - delta, predator.mu)

    from .control import inner_product

    pi1_low = reproductive_value(prey.k, prey.mu, z1 + delta)
    pi1_floor = prey.kappa + (
        inner_product(pi1_low, prey.n_profile)
        - inner_product(prey.pi0, prey.n_profile)
    )
    pi2_high = reproductive_value(predator.k, predator.mu, z2 - delta)
    pi2_ceil = predator.kappa + (
        inner_product(pi2_high, predator.n_profile)
        - inner_product(predator.pi0, predator.n_profile)
    )
    if gamma2_floor <= 0 or kappa2_floor <= 0 or pi1_floor <= 0:
        raise DomainError(
            f"delta = {delta:g} exhausts a hatted denominator for this setup"
        )

    n1_mass = integrate(prey.n_profile)
    n2_mass = integrate(predator.n_profile)
    x1s = eq.x1_star0
    x2s = eq.x2_star0

    l_a = l_gamma2 / (x1s * gamma2_floor**2)
    l_m1 = (
        l_kappa1 / (gamma2_floor * pi1_floor)
        + kappa1_ceil * l_gamma2 / (gamma2_floor**2 * pi1_floor)
        + kappa1_ceil * l_pi1 * n1_mass / (gamma2_floor * pi1_floor**2)
    ) / x1s
    l_m2 = x2s * (
        l_gamma1 * pi2_ceil / kappa2_floor
        + gamma1_ceil * l_pi2 * n2_mass / kappa2_floor
        + gamma1_ceil * pi2_ceil * l_kappa2 / kappa2_floor**2
    )

    e1_ceil = 1.0 + radius / a
    e2_ceil = 1.0 + radius / b
    eps = cfg.epsilon
    l_gain = (1.0 + eps) + max(
        eps * l_a + l_m1 * e1_ceil, (1.0 + eps) * l_m2 * e2_ceil
    )
    return max(1.0, l_a) + cfg.beta * l_gain


def states_in_radius(radius: float, lq: LyapunovQuantities, n_theta: int = 24,
                     n_rho: int = 6) -> np.ndarray:
    """Polar sampling of {r <= radius} back-mapped to eta coordinates."""
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    rho = radius * np.arange(1, n_rho + 1) / n_rho
    p1 = np.outer(rho, np.cos(theta)).ravel()
    p2 = np.outer(rho, np.sin(theta)).ravel()
    keep = p1 < lq.a_gain  # eta1 = -ln(1 - phi1/a) needs phi1 < a
    p1, p2 = p1[keep], p2[keep]
    eta1 = -np.log1p(-p1 / lq.a_gain)
    eta2 = np.log1p(p2 / lq.b_gain)
    return np.column_stack([eta1, eta2])


def empirical_perturbation_ratio(
    radius: float,
    delta: float,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
    n_error_grid: int = 21,
    n_theta: int = 24,
) -> dict:
    """max |delta_u| / (|e1|+|e2|) over sampled states and errors.

    Also evaluates the constructive bound; the report records both and
    whether the one-sided comparison holds.
    """
    lq_local = _lq(eq, cfg, prey, predator)
    states = states_in_radius(radius, lq_local, n_theta=n_theta)
    x = np.exp(-states[:, 0])
    y = np.exp(states[:, 1])
    zero = hatted_quantities(0.0, 0.0, prey, predator, eq, cfg)
    base = _affine_coefficients([zero], cfg)[0]
    worst = 0.0
    for e1, e2 in _error_ball_samples(delta, n_error_grid):
        weight = abs(e1) + abs(e2)
        if weight == 0.0:
            continue  # 0/0 rows carry no information
        led = hatted_quantities(float(e1), float(e2), prey, predator, eq, cfg)
        row = _affine_coefficients([led], cfg)[0]
        du = (row[0] - base[0]) + (row[1] - base[1]) * x + (row[2] - base[2]) * y
        worst = max(worst, float(np.abs(du).max()) / weight)
    bound = constructive_perturbation_bound(radius, delta, prey, predator, eq, cfg)
    return {
        "radius": radius,
        "delta": delta,
        "empirical": worst,
        "constructive": bound,
        "bounded": worst <= bound,
    }


# ---------------------------------------------------------------------------
# Certificate constants and the decay envelope.


@dataclass(frozen=True)
class RobustnessCertificate:
    """All scalar quantities of the practical-stability certificate."""

    delta: float
    c: float
    c_star_delta: float
    R_c: float
    C_R: float
    m_c: float
    M_c: float
    B1: float
    B2: float
    q: float
    q0: float
    beta_c_amplitude: float
    beta_c_decay: float
    mu_c_delta: float
    majorization_ok: bool

    def envelope(self, r0: float, t) -> np.ndarray:
        """Decay envelope beta_c(r0, t) + mu_c(delta)."""
        return (
            self.beta_c_amplitude * np.exp(-self.beta_c_decay * np.asarray(t)) * r0
            + self.mu_c_delta
        )


def certificate_constants(
    c: float,
    delta: float,
    lq: LyapunovQuantities,
    cfg: ControllerConfig,
    c_star_delta: float,
    big_c_r: float,
    n_rays: int = DEFAULT_N_RAYS,
) -> RobustnessCertificate:
    """Evaluate every closed form of the certificate at level c."""
    if not c < c_star_delta:
        raise ValueError(f"c = {c:g} must lie below c*_delta = {c_star_delta:g}")
    a, b = lq.a_gain, lq.b_gain
    eps = cfg.epsilon
    b1 = 1.0 + c / a
    b2 = 1.0 + c / ((1.0 + eps) * b)
    m_c = 0.5 * min(np.exp(-3.0 * b1) / a, (1.0 + eps) * np.exp(-3.0 * b2) / b)
    big_m = 0.5 * max(np.exp(3.0 * b1) / a, (1.0 + eps) * np.exp(3.0 * b2) / b)
    spread = big_m / m_c
    q0 = 1.0 / (1.0 + (lq.zeta1 - lq.zeta2) / a)
    q = (1.0 + eps) * q0 * np.exp(-3.0 * c * (1.0 / a) * (1.0 - q0 / (1.0 + eps)))
    majorization_ok = bool(
        spread <= np.exp(3.0 * (b1 + b2)) * (q + 1.0 / q) * (1.0 + 1e-12)
    )
    amplitude = float(np.sqrt(spread))
    decay = lq.lambda_star / (4.0 * big_m)
    mu_c = lq.c_eps / lq.lambda_star * amplitude * big_c_r * delta
    return RobustnessCertificate(
        delta=delta,
        c=c,
        c_star_delta=c_star_delta,
        R_c=max_radial_on_level(c, lq, n_rays),
        C_R=big_c_r,
        m_c=float(m_c),
        M_c=float(big_m),
        B1=b1,
        B2=b2,
        q=float(q),
        q0=float(q0),
        beta_c_amplitude=amplitude,
        beta_c_decay=float(decay),
        mu_c_delta=float(mu_c),
        majorization_ok=majorization_ok,
    )


# ---------------------------------------------------------------------------
# Sweep: certify, simulate worst corners, and verify the claims.


def robustness_sweep(
    deltas,
    prey: SpeciesSpec,
    predator: SpeciesSpec,
    eq: EquilibriumSpec,
    cfg: ControllerConfig,
    horizon: float = 50.0,
    dt: float = 1e-3,
    n_initial: int = 8,
    level_margin: float = 0.9,
    n_rays: int = DEFAULT_N_RAYS,
    tail_fraction: float = 0.2,
    keep_traces: bool = False,
) -> list[dict]:
    """Certify each budget and drive worst-corner trajectories against it.

    For each delta: compute c*_delta, pick c = margin * c*_delta, start on
    the level boundary, apply the corner errors (+-delta/2, -+delta/2), and
    record invariance excursions, clamp events, the trajectory tail, and
    the pointwise envelope check.  Violations are reported, not raised.
    """
    lq = _lq(eq, cfg, prey, predator)
    rows = []
    for delta in deltas:
        c_star = certified_level(delta, prey, predator, eq, cfg, n_rays)
        c = level_margin * c_star
        ratio = empirical_perturbation_ratio(
            max_radial_on_level(c, lq, n_rays), max(delta, 1e-12),
            prey, predator, eq, cfg,
        )
        cert = certificate_constants(
            c, delta, lq, cfg, c_star, ratio["constructive"], n_rays
        )
        corners = [(0.0, 0.0)] if delta == 0.0 else [
            (delta / 2.0, -delta / 2.0), (-delta / 2.0, delta / 2.0)
        ]
        starts = level_set_boundary(c, lq, n_rays)[
            :: max(1, n_rays // n_initial)
        ]
        max_v1 = 0.0
        clamp_events = 0
        tail_r = 0.0
        envelope_ok = True
        trace = None
        for e1, e2 in corners:
            led = hatted_quantities(e1, e2, prey, predator, eq, cfg)
            controller = controller_from_ledger(led, cfg)
            traj = integrate_eta(starts, horizon, dt, controller, lq,
                                 record_every=10)
            max_v1 = max(max_v1, float(traj.v1.max()))
            clamp_events += traj.clamp_events
            n_tail = max(1, int(tail_fraction * traj.r.shape[0]))
            tail_r = max(tail_r, float(traj.r[-n_tail:].max()))
            env = (
                cert.beta_c_amplitude
                * np.exp(-cert.beta_c_decay * traj.t)[:, None]
                * traj.r[0][None, :]
                + cert.mu_c_delta
            )
            envelope_ok = envelope_ok and bool(np.all(traj.r <= env + 1e-12))
            if keep_traces and trace is None:
                j = int(np.argmax(traj.r[0]))
                trace = (
                    f"delta={delta:g}", traj.t.copy(),
                    traj.r[:, j].copy(), env[:, j].copy(),
                )
        rows.append(
            {
                "delta": delta,
                "c_star": c_star,
                "c": c,
                "R_c": cert.R_c,
                "C_R_empirical": ratio["empirical"],
                "C_R_constructive": ratio["constructive"],
                "max_V1_excursion": max_v1,
                "invariant": max_v1 <= c * (1.0 + 1e-9),
                "clamp_events": clamp_events,
                "tail_r": tail_r,
                "mu_c": cert.mu_c_delta,
                "tail_within_mu": tail_r <= max(cert.mu_c_delta, 1e-8),
                "envelope_ok": envelope_ok,
                "majorization_ok": cert.majorization_ok,
                **({"_trace": trace} if keep_traces else {}),
            }
        )
    return rows
