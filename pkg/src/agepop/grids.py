"""Age grids, trapezoid quadrature, and the biologically shaped profile families.

Profiles are nonnegative functions of age sampled on a uniform grid over
[0, A], stored as immutable arrays.  All integrals in the toolkit are
composite trapezoid sums on that grid, so quadrature and PDE grids coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import DomainError


class ClampCounter:
    """Counts values clamped to zero when numerical noise dips negative."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)

    def reset(self):
        self.count = 0


#: Global counter of negative-noise clamps applied during profile construction.
NEGATIVE_CLAMPS = ClampCounter()

# Values below -_NOISE_FLOOR * scale are treated as genuinely invalid input
# rather than roundoff noise.
_NOISE_FLOOR = 1e-9


@dataclass(frozen=True)
class AgeGrid:
    """Uniform grid on [0, max_age] including both endpoints."""

    max_age: float
    n_points: int

    def __post_init__(self):
        if not self.max_age > 0:
            raise ValueError(f"max_age must be positive, got {self.max_age}")
        if self.n_points < 3:
            raise ValueError(f"n_points must be >= 3, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return self.max_age / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        a = np.linspace(0.0, self.max_age, self.n_points)
        a.flags.writeable = False
        return a

    def refined(self, factor: int) -> "AgeGrid":
        """Grid with `factor` times as many intervals (shared endpoints)."""
        return AgeGrid(self.max_age, factor * (self.n_points - 1) + 1)


DEFAULT_GRID = AgeGrid(max_age=1.0, n_points=201)


class AgeProfile:
    """Nonnegative function of age sampled on an :class:`AgeGrid`.

    Values are clamped to zero (and counted) when they are negative by no
    more than roundoff noise; anything more negative raises ``ValueError``.
    Instances are immutable.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: AgeGrid, values):
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 1 or vals.shape[0] != grid.n_points:
            raise ValueError(
                f"profile needs {grid.n_points} samples, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("profile values must be finite")
        neg = vals < 0.0
        if neg.any():
            scale = 1.0 + float(np.abs(vals).max())
            if vals.min() < -_NOISE_FLOOR * scale:
                raise ValueError(f"profile has negative values (min {vals.min():g})")
            vals = np.where(neg, 0.0, vals)
            NEGATIVE_CLAMPS.add(int(neg.sum()))
        else:
            vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, *_):
        raise AttributeError("AgeProfile is immutable")

    def __repr__(self):
        return (
            f"AgeProfile(A={self.grid.max_age:g}, n={self.grid.n_points}, "
            f"range=[{self.values.min():g}, {self.values.max():g}])"
        )

    def sup_norm(self) -> float:
        return float(self.values.max())

    def lipschitz_seminorm(self) -> float:
        """Max adjacent difference quotient (discrete proxy for [f]_{C^0,1})."""
        return float(np.abs(np.diff(self.values)).max() / self.grid.spacing)

    def resample(self, grid: AgeGrid) -> "AgeProfile":
        """Linear interpolation onto another grid (extends flat past A)."""
        if grid == self.grid:
            return self
        vals = np.interp(grid.points, self.grid.points, self.values)
        return AgeProfile(grid, vals)

    def to_dict(self) -> dict:
        return {"max_age": self.grid.max_age, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict, n_points: int | None = None) -> "AgeProfile":
        values = d["values"]
        prof = cls(AgeGrid(float(d["max_age"]), len(values)), values)
        if n_points is not None and n_points != prof.grid.n_points:
            prof = prof.resample(AgeGrid(prof.grid.max_age, n_points))
        return prof


def _check_shared_grid(*profiles: AgeProfile) -> AgeGrid:
    grid = profiles[0].grid
    for p in profiles[1:]:
        if p.grid != grid:
            raise ValueError("profiles must share a grid")
    return grid


def trapezoid_weights(grid: AgeGrid) -> np.ndarray:
    w = np.full(grid.n_points, grid.spacing)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def integrate(profile: AgeProfile) -> float:
    """Composite-trapezoid approximation of the integral over [0, A]."""
    v = profile.values
    h = profile.grid.spacing
    return float(h * (v.sum() - 0.5 * (v[0] + v[-1])))


def _cumtrapz(values: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = 0.0
    np.cumsum((values[:-1] + values[1:]) * (0.5 * h), out=out[1:])
    return out


def cumulative_integral(profile: AgeProfile) -> AgeProfile:
    """a -> integral of the profile from 0 to a; output[0] = 0."""
    vals = _cumtrapz(profile.values, profile.grid.spacing)
    return AgeProfile(profile.grid, vals)


def survival(mu: AgeProfile) -> AgeProfile:
    """Survival function: probability of reaching age a under mortality mu."""
    return AgeProfile(mu.grid, np.exp(-_cumtrapz(mu.values, mu.grid.spacing)))


def net_reproduction_number(k: AgeProfile, mu: AgeProfile) -> float:
    """Expected lifetime offspring per newborn (fertility weighted by survival)."""
    _check_shared_grid(k, mu)
    return integrate(AgeProfile(k.grid, k.values * survival(mu).values))


# ---------------------------------------------------------------------------
# Parametric profile families used for sampling.

# (name, low, high) for each family parameter's uniform sampling range.
FAMILY_RANGES = [
    ("k_base", 0.40, 0.80),
    ("k_amp", 2.00, 3.00),
    ("k_center", 0.11, 0.35),
    ("k_sigma", 0.05, 0.23),
    ("mu_base", 0.03, 0.10),
    ("mu_juv_amp", 0.05, 0.19),
    ("mu_juv", 3.5, 5.5),
    ("mu_sen_amp", 0.03, 0.17),
    ("mu_sen", 1.7, 2.9),
    ("g_base", 0.05, 0.13),
    ("g_amp", 0.20, 0.50),
    ("g_center", 0.37, 0.63),
    ("g_sigma", 0.05, 0.31),
]


@dataclass(frozen=True)
class FamilyParams:
    """Parameters of the fertility / mortality / interaction families.

    Fertility is a Gaussian bump over a base level, mortality is a bathtub
    (juvenile exponential decay plus senescent power growth over a base),
    and the interaction kernel is a Gaussian bump peaking at mature ages.
    """

    k_base: float
    k_amp: float
    k_center: float
    k_sigma: float
    mu_base: float
    mu_juv_amp: float
    mu_juv: float
    mu_sen_amp: float
    mu_sen: float
    g_base: float
    g_amp: float
    g_center: float
    g_sigma: float

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def sample_family_params(rng: np.random.Generator) -> FamilyParams:
    """Draw family parameters independently from their uniform ranges."""
    return FamilyParams(**{name: float(rng.uniform(lo, hi)) for name, lo, hi in FAMILY_RANGES})


def sample_family(
    params: FamilyParams, grid: AgeGrid = DEFAULT_GRID
) -> tuple[AgeProfile, AgeProfile, AgeProfile]:
    """Evaluate the three family formulas at the grid nodes."""
    a = grid.points
    p = params
    k = p.k_base + p.k_amp * np.exp(-((a - p.k_center) ** 2) / (2.0 * p.k_sigma**2))
    mu = p.mu_base + p.mu_juv_amp * np.exp(-p.mu_juv * a) + p.mu_sen_amp * a**p.mu_sen
    g = p.g_base + p.g_amp * np.exp(-((a - p.g_center) ** 2) / (2.0 * p.g_sigma**2))
    return AgeProfile(grid, k), AgeProfile(grid, mu), AgeProfile(grid, g)


def constant_profile(grid: AgeGrid, value: float) -> AgeProfile:
    return AgeProfile(grid, np.full(grid.n_points, float(value)))


# ---------------------------------------------------------------------------
# Ordered function-class bounds for the Lipschitz analysis.


@dataclass(frozen=True)
class ClassBounds:
    """Pointwise-ordered envelopes for (k, mu) plus a sup+Lipschitz budget G.

    Membership in the class means k_min <= k <= k_max and
    mu_min <= mu <= mu_max pointwise, with sup norm plus discrete Lipschitz
    seminorm of each function at most ``lipschitz_budget``.
    """

    k_min: AgeProfile
    k_max: AgeProfile
    mu_min: AgeProfile
    mu_max: AgeProfile
    lipschitz_budget: float

    def __post_init__(self):
        grid = _check_shared_grid(self.k_min, self.k_max, self.mu_min, self.mu_max)
        if np.any(self.k_min.values > self.k_max.values + 1e-15):
            raise ValueError("k_min must not exceed k_max pointwise")
        if np.any(self.mu_min.values > self.mu_max.values + 1e-15):
            raise ValueError("mu_min must not exceed mu_max pointwise")
        if not self.lipschitz_budget > 0:
            raise ValueError("lipschitz_budget must be positive")
        del grid

    @property
    def grid(self) -> AgeGrid:
        return self.k_min.grid

    def floor_reproduction_number(self) -> float:
        """Worst-case reproduction number over the class (k_min with mu_max)."""
        return net_reproduction_number(self.k_min, self.mu_max)


def class_membership(bounds: ClassBounds, k: AgeProfile, mu: AgeProfile,
                     check_budget: bool = False) -> None:
    """Raise DomainError unless (k, mu) lies in the bounded class."""
    _check_shared_grid(bounds.k_min, k, mu)
    tol = 1e-12
    if np.any(k.values < bounds.k_min.values - tol) or np.any(
        k.values > bounds.k_max.values + tol
    ):
        raise DomainError("k violates the pointwise class envelope")
    if np.any(mu.values < bounds.mu_min.values - tol) or np.any(
        mu.values > bounds.mu_max.values + tol
    ):
        raise DomainError("mu violates the pointwise class envelope")
    if check_budget:
        for prof in (k, mu):
            if prof.sup_norm() + prof.lipschitz_seminorm() > bounds.lipschitz_budget:
                raise DomainError("profile exceeds the sup+Lipschitz budget")


def clip_to_class(bounds: ClassBounds, k: AgeProfile, mu: AgeProfile
                  ) -> tuple[AgeProfile, AgeProfile]:
    """Pointwise-clip a sampled pair into the class envelope."""
    kc = np.clip(k.values, bounds.k_min.values, bounds.k_max.values)
    mc = np.clip(mu.values, bounds.mu_min.values, bounds.mu_max.values)
    return AgeProfile(k.grid, kc), AgeProfile(mu.grid, mc)


def envelope_bounds_from_box(
    lows: FamilyParams, highs: FamilyParams, grid: AgeGrid = DEFAULT_GRID,
    budget_margin: float = 1.5,
) -> ClassBounds:
    """Pointwise envelope of the fertility/mortality families over a parameter box.

    The per-node extremes are taken over a dense sweep of the Gaussian
    center/width (and bathtub shape) parameters, so every family member with
    parameters inside the box lies between the envelopes.
    """
    a = grid.points
    n_sweep = 33
    centers = np.linspace(lows.k_center, highs.k_center, n_sweep)
    sigmas = np.linspace(lows.k_sigma, highs.k_sigma, n_sweep)
    bump = np.exp(
        -((a[None, None, :] - centers[:, None, None]) ** 2)
        / (2.0 * sigmas[None, :, None] ** 2)
    )
    k_min = lows.k_base + lows.k_amp * bump.min(axis=(0, 1))
    k_max = highs.k_base + highs.k_amp * bump.max(axis=(0, 1))

    juvs = np.linspace(lows.mu_juv, highs.mu_juv, n_sweep)
    sens = np.linspace(lows.mu_sen, highs.mu_sen, n_sweep)
    juv_term = np.exp(-juvs[:, None] * a[None, :])
    with np.errstate(divide="ignore"):
        sen_term = np.where(a[None, :] > 0, a[None, :] ** sens[:, None], 0.0)
    sen_term[:, 0] = 0.0 if lows.mu_sen > 0 else 1.0
    mu_min = lows.mu_base + lows.mu_juv_amp * juv_term.min(axis=0) \
        + lows.mu_sen_amp * sen_term.min(axis=0)
    mu_max = highs.mu_base + highs.mu_juv_amp * juv_term.max(axis=0) \
        + highs.mu_sen_amp * sen_term.max(axis=0)

    profs = [AgeProfile(grid, v) for v in (k_min, k_max, mu_min, mu_max)]
    budget = budget_margin * max(
        p.sup_norm() + p.lipschitz_seminorm() for p in profs
    )
    return ClassBounds(*profs, lipschitz_budget=budget)
