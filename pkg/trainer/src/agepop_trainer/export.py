"""Export dense torch networks to the portable "v1" weights format.

Input standardization and target de-standardization are baked into the
first and last affine layers, so the exported file is self-contained:
the consumer feeds raw concatenated (k, mu) samples and reads a raw
growth rate.
"""

from __future__ import annotations

import base64
import json

import numpy as np
import torch

MODEL_FORMAT_VERSION = "v1"

_ACTIVATION_NAMES = {
    torch.nn.GELU: "gelu",
    torch.nn.Tanh: "tanh",
    torch.nn.ReLU: "relu",
}


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
    ).decode("ascii")


def dense_to_layers(net: torch.nn.Sequential) -> list[dict]:
    """(weight, bias, activation) triples from a Linear/activation stack."""
    layers = []
    pending = None
    for module in net:
        if isinstance(module, torch.nn.Linear):
            if pending is not None:
                layers.append(pending)
            pending = {
                "weight": module.weight.detach().cpu().numpy().astype(float),
                "bias": module.bias.detach().cpu().numpy().astype(float),
                "activation": "identity",
            }
        else:
            name = _ACTIVATION_NAMES.get(type(module))
            if name is None:
                raise ValueError(f"unexportable module {type(module).__name__}")
            if pending is None:
                raise ValueError("activation before the first affine layer")
            pending["activation"] = name
    if pending is not None:
        layers.append(pending)
    return layers


def bake_normalization(layers: list[dict], x_mean, x_std, y_mean, y_std) -> list[dict]:
    """Fold input/target standardization into the boundary affine layers."""
    x_mean = np.asarray(x_mean, dtype=float)
    x_std = np.asarray(x_std, dtype=float)
    out = [dict(layer) for layer in layers]
    first = out[0]
    w = first["weight"] / x_std[None, :]
    b = first["bias"] - w @ x_mean
    out[0] = dict(first, weight=w, bias=b)
    last = out[-1]
    out[-1] = dict(
        last,
        weight=float(y_std) * last["weight"],
        bias=float(y_std) * last["bias"] + float(y_mean),
    )
    return out


def write_model(path, layers: list[dict], grid_size: int, max_age: float,
                metadata: dict) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "grid_size": grid_size,
        "max_age": max_age,
        "layers": [
            {
                "rows": int(layer["weight"].shape[0]),
                "cols": int(layer["weight"].shape[1]),
                "weight_b64": _encode(layer["weight"]),
                "bias_b64": _encode(layer["bias"]),
                "activation": layer["activation"],
            }
            for layer in layers
        ],
        "metadata": metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def evaluate_exported(layers: list[dict], features: np.ndarray) -> np.ndarray:
    """Reference forward pass of exported layers (for trainer self-checks)."""
    acts = {
        "relu": torch.relu,
        "tanh": torch.tanh,
        "gelu": lambda z: 0.5 * z * (1.0 + torch.erf(z / np.sqrt(2.0))),
        "identity": lambda z: z,
    }
    z = torch.as_tensor(np.asarray(features, dtype=float)).T  # (in, B)
    for layer in layers:
        w = torch.as_tensor(layer["weight"])
        b = torch.as_tensor(layer["bias"])[:, None]
        z = acts[layer["activation"]](w @ z + b)
    return z[0].numpy()
