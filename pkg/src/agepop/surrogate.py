"""Dataset export for operator learning and portable surrogate inference.

The training pair is ((k, mu), zeta): two sampled rate functions in, the
solved growth rate out.  Records are JSON Lines with the profile arrays
stored raw at generation resolution; acceptance filters on the
reproduction number (R0 > 1.2) keep every record inside the solver domain
with margin.

Models are dense feed-forward networks in a portable JSON format
("v1"): base64-encoded little-endian float64 row-major weight matrices,
explicit activation names, and a 2*grid_size input layout (k samples
concatenated with mu samples on a fixed uniform grid).  Inference here is
a plain forward pass; training lives in a separate package that exports
to this format.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ShapeError
from .grids import AgeGrid, AgeProfile, DEFAULT_GRID, net_reproduction_number, sample_family, sample_family_params
from .operators import DEFAULT_ROOT_TOL, lotka_sharpe_integral, solve_growth_rate

R0_ACCEPTANCE = 1.2
MODEL_FORMAT_VERSION = "v1"
DEFAULT_MODEL_GRID_SIZE = 64


@dataclass(frozen=True)
class DatasetRecord:
    """One training pair plus its acceptance metadata."""

    grid: AgeGrid
    k: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    zeta: float
    r0: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "max_age": self.grid.max_age,
                "n_points": self.grid.n_points,
                "k": self.k.tolist(),
                "mu": self.mu.tolist(),
                "g": self.g.tolist(),
                "zeta": self.zeta,
                "r0": self.r0,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        d = json.loads(line)
        grid = AgeGrid(float(d["max_age"]), int(d["n_points"]))
        return cls(
            grid=grid,
            k=np.asarray(d["k"], dtype=float),
            mu=np.asarray(d["mu"], dtype=float),
            g=np.asarray(d.get("g", []), dtype=float),
            zeta=float(d["zeta"]),
            r0=float(d["r0"]),
        )

    def profiles(self) -> tuple[AgeProfile, AgeProfile]:
        return AgeProfile(self.grid, self.k), AgeProfile(self.grid, self.mu)


def _record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_record(seed: int, index: int, grid: AgeGrid = DEFAULT_GRID,
                    tol: float = DEFAULT_ROOT_TOL) -> tuple[DatasetRecord, int]:
    """Rejection-sample one accepted record; returns (record, draws_used).

    The RNG stream is derived from (seed, index), so records are
    reproducible independently of scheduling or worker count.
    """
    rng = _record_rng(seed, index)
    draws = 0
    while True:
        draws += 1
        params = sample_family_params(rng)
        k, mu, g = sample_family(params, grid)
        r0 = net_reproduction_number(k, mu)
        if r0 > R0_ACCEPTANCE:
            root = solve_growth_rate(k, mu, tol)
            return (
                DatasetRecord(
                    grid=grid,
                    k=k.values.copy(),
                    mu=mu.values.copy(),
                    g=g.values.copy(),
                    zeta=root.zeta,
                    r0=r0,
                ),
                draws,
            )


def generate_dataset(
    n: int, seed: int, grid: AgeGrid = DEFAULT_GRID, tol: float = DEFAULT_ROOT_TOL
) -> tuple[list[DatasetRecord], dict]:
    """Exactly n accepted records plus an acceptance-rate summary."""
    if n < 1:
        raise ValueError("n must be >= 1")
    records = []
    total_draws = 0
    for i in range(n):
        rec, draws = generate_record(seed, i, grid, tol)
        records.append(rec)
        total_draws += draws
    stats = {
        "n": n,
        "seed": seed,
        "total_draws": total_draws,
        "acceptance_rate": n / total_draws,
    }
    return records, stats


def write_dataset(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_dataset(path) -> list[DatasetRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(DatasetRecord.from_json(line))
    return out


# ---------------------------------------------------------------------------
# Portable dense model format and inference.

_ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "gelu": lambda z: 0.5 * z * (1.0 + erf(z / np.sqrt(2.0))),
    "identity": lambda z: z,
}


@dataclass(frozen=True)
class ModelLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weight must be 2-D and bias 1-D")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != rows {self.weight.shape[0]}"
            )


@dataclass(frozen=True)
class SurrogateModel:
    """Dense feed-forward growth-rate surrogate with fixed input grid."""

    grid_size: int
    max_age: float
    layers: tuple[ModelLayer, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = 2 * self.grid_size
        for i, layer in enumerate(self.layers):
            if layer.weight.shape[1] != dim:
                raise ShapeError(
                    f"layer {i} expects input {layer.weight.shape[1]}, got {dim}"
                )
            dim = layer.weight.shape[0]
        if dim != 1:
            raise ShapeError(f"final layer must output a scalar, got {dim}")

    @property
    def input_grid(self) -> AgeGrid:
        return AgeGrid(self.max_age, self.grid_size)


def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
    ).decode("ascii")


def _decode_array(text: str, shape) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    arr = np.frombuffer(raw, dtype="<f8").astype(float)
    return arr.reshape(shape)


def save_model(path, model: SurrogateModel) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "grid_size": model.grid_size,
        "max_age": model.max_age,
        "layers": [
            {
                "rows": layer.weight.shape[0],
                "cols": layer.weight.shape[1],
                "weight_b64": _encode_array(layer.weight),
                "bias_b64": _encode_array(layer.bias),
                "activation": layer.activation,
            }
            for layer in model.layers
        ],
        "metadata": model.metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> SurrogateModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ShapeError(
            f"unsupported model format version {doc.get('version')!r}"
        )
    layers = tuple(
        ModelLayer(
            weight=_decode_array(spec["weight_b64"], (spec["rows"], spec["cols"])),
            bias=_decode_array(spec["bias_b64"], (spec["rows"],)),
            activation=spec["activation"],
        )
        for spec in doc["layers"]
    )
    return SurrogateModel(
        grid_size=int(doc["grid_size"]),
        max_age=float(doc["max_age"]),
        layers=layers,
        metadata=doc.get("metadata", {}),
    )


def featurize(model: SurrogateModel, k: AgeProfile, mu: AgeProfile) -> np.ndarray:
    """Concatenated (k, mu) samples resampled to the model's input grid."""
    grid = model.input_grid
    return np.concatenate([k.resample(grid).values, mu.resample(grid).values])


def evaluate_model(model: SurrogateModel, k: AgeProfile, mu: AgeProfile) -> float:
    """Deterministic forward pass; bit-stable for identical inputs."""
    z = featurize(model, k, mu)
    for layer in model.layers:
        z = _ACTIVATIONS[layer.activation](layer.weight @ z + layer.bias)
    return float(z[0])


def class_bounds_digest(records) -> str:
    """Pointwise-envelope fingerprint of a dataset (for model metadata)."""
    k_stack = np.stack([rec.k for rec in records])
    mu_stack = np.stack([rec.mu for rec in records])
    env = np.concatenate(
        [k_stack.min(0), k_stack.max(0), mu_stack.min(0), mu_stack.max(0)]
    )
    return hashlib.sha256(env.tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Error-budget audit: surrogate accuracy against the certified budget.


def error_budget_audit(
    evaluator,
    records,
    budget_delta: float,
) -> dict:
    """delta_hat = 2 * max per-sample error; certified iff below the budget.

    `evaluator` maps (k, mu) profiles to an approximate growth rate; pass
    the exact solver to validate the audit path itself.  The factor 2
    converts per-channel error into the combined |e1| + |e2| budget.
    """
    worst = 0.0
    errors = []
    for rec in records:
        k, mu = rec.profiles()
        err = abs(evaluator(k, mu) - rec.zeta)
        errors.append(err)
        worst = max(worst, err)
    delta_hat = 2.0 * worst
    return {
        "n_test": len(errors),
        "max_error": worst,
        "mean_error": float(np.mean(errors)) if errors else 0.0,
        "delta_hat": delta_hat,
        "budget_delta": budget_delta,
        "certified": delta_hat < budget_delta,
    }


def exact_evaluator(tol: float = DEFAULT_ROOT_TOL):
    """The exact solver in evaluator clothing (for audit plumbing tests)."""

    def evaluate(k: AgeProfile, mu: AgeProfile) -> float:
        return solve_growth_rate(k, mu, tol).zeta

    return evaluate


def model_evaluator(model: SurrogateModel):
    def evaluate(k: AgeProfile, mu: AgeProfile) -> float:
        return evaluate_model(model, k, mu)

    return evaluate


def verify_dataset(records, tol: float = 1e-10) -> dict:
    """Check the stored invariants: acceptance filter and residual."""
    worst_resid = 0.0
    min_r0 = float("inf")
    for rec in records:
        k, mu = rec.profiles()
        resid = abs(lotka_sharpe_integral(k, mu, rec.zeta) - 1.0)
        worst_resid = max(worst_resid, resid)
        min_r0 = min(min_r0, rec.r0)
    return {
        "n": len(records),
        "worst_residual": worst_resid,
        "min_r0": min_r0,
        "ok": worst_resid <= tol and min_r0 > R0_ACCEPTANCE,
    }
