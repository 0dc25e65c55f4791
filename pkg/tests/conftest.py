import numpy as np
import pytest

from agepop.control import ControllerConfig
from agepop.equilibrium import build_equilibrium, build_species, setpoint_for_dilution
from agepop.grids import (
    DEFAULT_GRID,
    FamilyParams,
    FAMILY_RANGES,
    envelope_bounds_from_box,
    sample_family,
    sample_family_params,
    net_reproduction_number,
)

FULL_LOWS = FamilyParams(**{name: lo for name, lo, _ in FAMILY_RANGES})
FULL_HIGHS = FamilyParams(**{name: hi for name, _, hi in FAMILY_RANGES})

# Narrow sub-box of the family ranges whose pointwise envelope still has a
# floor reproduction number above one (required by the class constants).
NARROW_LOWS = FamilyParams(
    k_base=0.60, k_amp=2.5, k_center=0.20, k_sigma=0.16,
    mu_base=0.03, mu_juv_amp=0.05, mu_juv=5.0, mu_sen_amp=0.03, mu_sen=2.5,
    g_base=0.05, g_amp=0.20, g_center=0.37, g_sigma=0.05,
)
NARROW_HIGHS = FamilyParams(
    k_base=0.80, k_amp=3.0, k_center=0.26, k_sigma=0.23,
    mu_base=0.05, mu_juv_amp=0.08, mu_juv=5.5, mu_sen_amp=0.05, mu_sen=2.9,
    g_base=0.13, g_amp=0.50, g_center=0.63, g_sigma=0.31,
)


def accepted_draws(seed, count, grid=DEFAULT_GRID, min_r0=1.2):
    """First `count` family draws passing the reproduction-number filter."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        params = sample_family_params(rng)
        k, mu, g = sample_family(params, grid)
        if net_reproduction_number(k, mu) > min_r0:
            out.append((params, k, mu, g))
    return out


@pytest.fixture(scope="session")
def narrow_class():
    bounds = envelope_bounds_from_box(NARROW_LOWS, NARROW_HIGHS, DEFAULT_GRID)
    assert bounds.floor_reproduction_number() > 1.0
    return bounds


@pytest.fixture(scope="session")
def species_pair():
    """Deterministic prey/predator pair built from accepted family draws."""
    draws = accepted_draws(seed=2024, count=8)
    built = [build_species(k, mu, g) for _, k, mu, g in draws]
    built.sort(key=lambda sp: sp.zeta, reverse=True)
    prey, predator = built[0], built[1]
    return prey, predator


@pytest.fixture(scope="session")
def standard_setup(species_pair):
    """Species pair + equilibrium at u* = 0.6*min(zeta) + controller config."""
    prey, predator = species_pair
    u_star = 0.6 * min(prey.zeta, predator.zeta)
    from agepop.operators import interaction_gain

    gamma2 = interaction_gain(predator.g, prey.zeta, prey.mu)
    x1_star0 = setpoint_for_dilution(prey.zeta, predator.zeta, gamma2, u_star)
    eq = build_equilibrium(prey, predator, x1_star0)
    cfg = ControllerConfig(beta=0.8, epsilon=0.2)
    return prey, predator, eq, cfg
