import math

import numpy as np
import pytest

from agepop.equilibrium import (
    build_equilibrium,
    build_species,
    equilibrium_scalars,
    identity_residuals,
    setpoint_for_dilution,
)
from agepop.errors import SetpointError
from agepop.grids import AgeGrid, constant_profile
from agepop.operators import interaction_gain

from conftest import accepted_draws

LN2 = math.log(2.0)


def test_constant_species_closed_forms():
    g = AgeGrid(LN2, 60001)
    sp = build_species(
        constant_profile(g, 2.0), constant_profile(g, 0.0), constant_profile(g, 1.0)
    )
    a = g.points
    assert sp.zeta == pytest.approx(1.0, abs=1e-10)
    assert sp.kappa == pytest.approx(1.0 - LN2, abs=1e-9)
    np.testing.assert_allclose(sp.n_profile.values, np.exp(-a), atol=1e-9)
    np.testing.assert_allclose(sp.pi0.values, 2.0 - np.exp(a), atol=1e-8)


def test_species_invariants_on_draws():
    for _, k, mu, g in accepted_draws(seed=51, count=5):
        sp = build_species(k, mu, g)
        assert sp.n_profile.values[0] == 1.0
        assert sp.pi0.values[0] == pytest.approx(1.0, abs=1e-8)


def test_equilibrium_identities(standard_setup):
    prey, predator, eq, _ = standard_setup
    res = identity_residuals(eq, prey, predator)
    assert abs(res["double_identity"]) <= 1e-10
    assert abs(res["b_identity"]) <= 1e-10
    assert 0.0 < eq.u_star < min(prey.zeta, predator.zeta)
    assert eq.x1_star0 > 1.0 / (predator.zeta * eq.gamma2)


def test_steady_profiles_transport_balance(standard_setup):
    # d/da ln x_i*(a) = -(zeta_i + mu_i(a)) up to grid tolerance
    prey, predator, eq, _ = standard_setup
    h = prey.grid.spacing
    for sp, prof in ((prey, eq.x1_star), (predator, eq.x2_star)):
        dlog = np.diff(np.log(prof.values)) / h
        mid = 0.5 * (sp.mu.values[:-1] + sp.mu.values[1:])
        np.testing.assert_allclose(dlog, -(sp.zeta + mid), atol=5e-3)


def test_setpoint_boundaries(standard_setup):
    prey, predator, _, _ = standard_setup
    gamma2 = interaction_gain(predator.g, prey.zeta, prey.mu)
    with pytest.raises(SetpointError):
        build_equilibrium(prey, predator, 1.0 / (predator.zeta * gamma2))
    with pytest.raises(SetpointError):
        setpoint_for_dilution(prey.zeta, predator.zeta, gamma2, u_star=0.0)


def test_predator_collapse_rejected():
    # huge setpoint pushes u* above zeta1, making x2*(0) nonpositive
    with pytest.raises(SetpointError):
        equilibrium_scalars(
            zeta1=0.5, zeta2=1.0, gamma1=0.3, gamma2=0.4, x1_star0=1000.0
        )


def test_scalar_identities_random_setpoints():
    rng = np.random.default_rng(55)
    checked = 0
    while checked < 100:
        z1, z2 = rng.uniform(0.3, 1.5, size=2)
        g1, g2 = rng.uniform(0.05, 0.8, size=2)
        u_star = rng.uniform(0.05, 0.95) * min(z1, z2)
        x1 = 1.0 / ((z2 - u_star) * g2)
        try:
            scal = equilibrium_scalars(z1, z2, g1, g2, x1)
        except SetpointError:
            continue
        assert abs((z1 - scal.lambda2) - (z2 - 1.0 / scal.lambda1)) <= 1e-10
        a = 1.0 / (scal.x1_star0 * g2)
        assert abs((z1 - z2 + a) - g1 * scal.x2_star0) <= 1e-10
        assert scal.u_star == pytest.approx(u_star, abs=1e-10)
        checked += 1


def test_reference_caption_consistency():
    # reference configuration: u* = 0.83, x1*(0) = 8.45, x2*(0) = 7.42;
    # with gamma2 back-solved from the caption numbers the identities close
    u_star, x1_star0, x2_star0 = 0.83, 8.45, 7.42
    zeta1, zeta2 = 1.1, 1.0  # any rates above u* close the loop
    gamma2 = 1.0 / (x1_star0 * (zeta2 - u_star))
    gamma1 = (zeta1 - u_star) / x2_star0
    scal = equilibrium_scalars(zeta1, zeta2, gamma1, gamma2, x1_star0)
    assert scal.u_star == pytest.approx(0.83, abs=1e-12)
    assert scal.x2_star0 == pytest.approx(7.42, abs=1e-10)
    assert zeta2 - 1.0 / (8.45 * gamma2) == pytest.approx(0.83, abs=1e-12)
    assert setpoint_for_dilution(zeta1, zeta2, gamma2, u_star) == pytest.approx(
        8.45, abs=1e-9
    )
