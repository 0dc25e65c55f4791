"""Training loops: dense fitting, spectral-teacher fitting, distillation.

Everything runs in deterministic single-threaded CPU mode so a fixed seed
reproduces the exported bytes exactly.  Inputs and targets are
standardized with training-split statistics that get baked into the
exported affine layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import class_digest, feature_matrix, load_records, split_indices
from .export import bake_normalization, dense_to_layers, write_model
from .networks import ReferenceFNO, build_dense


class TrainingError(RuntimeError):
    """Loss went non-finite or configuration is unusable."""


@dataclass(frozen=True)
class TrainConfig:
    dataset: str
    out: str
    arch: str = "dense"  # dense | reference-fno
    epochs: int = 100
    lr: float = 4e-3
    seed: int = 0
    batch_size: int = 64
    grid_size: int = 64
    max_age: float = 1.0
    val_fraction: float = 0.1
    hidden: tuple[int, ...] = (128, 128, 64)
    activation: str = "gelu"
    distill: bool = True
    distill_epochs: int = 300

    def __post_init__(self):
        if self.epochs < 0:
            raise TrainingError("epochs must be >= 0")
        if self.lr <= 0:
            raise TrainingError("learning rate must be positive")
        if self.arch not in ("dense", "reference-fno"):
            raise TrainingError(f"unknown architecture {self.arch!r}")
        if self.arch == "reference-fno" and not self.distill:
            raise TrainingError(
                "the spectral reference exports only through distillation"
            )


def _determinism(seed: int):
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def _fit(net, x, y, epochs, lr, batch_size, seed, weight_decay=1e-4):
    """Minibatch decoupled-weight-decay training with cosine learning rate."""
    if epochs == 0:
        with torch.no_grad():
            return float(torch.mean((net(x) - y) ** 2))
    opt = torch.optim.AdamW(net.parameters(), lr=lr, weight_decay=weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
    gen = torch.Generator().manual_seed(seed)
    n = x.shape[0]
    loss = None
    for _ in range(epochs):
        perm = torch.randperm(n, generator=gen)
        for i in range(0, n, batch_size):
            idx = perm[i : i + batch_size]
            opt.zero_grad()
            loss = torch.mean((net(x[idx]) - y[idx]) ** 2)
            if not torch.isfinite(loss):
                raise TrainingError("loss became non-finite")
            loss.backward()
            opt.step()
        sched.step()
    return float(loss.detach())


def train(config: TrainConfig) -> dict:
    """Train per config, export the dense model, return the report."""
    _determinism(config.seed)
    records = load_records(config.dataset)
    feats, targets = feature_matrix(records, config.grid_size)
    train_idx, val_idx = split_indices(
        len(records), config.val_fraction, config.seed
    )
    x = torch.tensor(feats, dtype=torch.float64)
    y = torch.tensor(targets, dtype=torch.float64)[:, None]
    x_mean = x[train_idx].mean(0)
    x_std = x[train_idx].std(0) + 1e-12
    y_mean = y[train_idx].mean()
    y_std = y[train_idx].std()
    xt = (x - x_mean) / x_std
    yt = (y - y_mean) / y_std

    report = {
        "arch": config.arch,
        "epochs": config.epochs,
        "seed": config.seed,
        "n_train": int(train_idx.size),
        "n_val": int(val_idx.size),
    }

    if config.arch == "dense":
        net = build_dense(2 * config.grid_size, config.hidden,
                          config.activation, config.seed)
        _fit(net, xt[train_idx], yt[train_idx], config.epochs, config.lr,
             config.batch_size, config.seed)
        student = net
    else:
        teacher = ReferenceFNO(config.grid_size, seed=config.seed)
        _fit(teacher, xt[train_idx], yt[train_idx], config.epochs, config.lr,
             config.batch_size, config.seed)
        with torch.no_grad():
            teacher_out = teacher(xt)
        report["teacher_train_mse"] = _raw_mse(
            teacher_out[train_idx], yt[train_idx], y_std
        )
        report["teacher_val_mse"] = _raw_mse(
            teacher_out[val_idx], yt[val_idx], y_std
        )
        # distill: dense student regresses the teacher's outputs
        student = build_dense(2 * config.grid_size, config.hidden,
                              config.activation, config.seed + 1)
        _fit(student, xt[train_idx], teacher_out[train_idx],
             config.distill_epochs, config.lr, config.batch_size,
             config.seed + 1)
        with torch.no_grad():
            fidelity = torch.mean(
                ((student(xt[val_idx]) - teacher_out[val_idx]) * y_std) ** 2
            )
        report["distill_fidelity_mse"] = float(fidelity)

    with torch.no_grad():
        pred = student(xt)
    train_mse = _raw_mse(pred[train_idx], yt[train_idx], y_std)
    val_mse = _raw_mse(pred[val_idx], yt[val_idx], y_std)
    val_err = ((pred[val_idx] - yt[val_idx]) * y_std).abs()
    report.update(
        train_mse=train_mse,
        val_mse=val_mse,
        val_max_error=float(val_err.max()),
    )

    layers = bake_normalization(
        dense_to_layers(student),
        x_mean.numpy(), x_std.numpy(), float(y_mean), float(y_std),
    )
    metadata = {
        "train_mse": train_mse,
        "val_mse": val_mse,
        "class_bounds_digest": class_digest(records),
        "arch": config.arch,
        "epochs": config.epochs,
        "seed": config.seed,
    }
    write_model(config.out, layers, config.grid_size, config.max_age, metadata)
    report["out"] = str(config.out)
    return report


def _raw_mse(pred: torch.Tensor, target: torch.Tensor, y_std: torch.Tensor) -> float:
    return float(torch.mean(((pred - target) * y_std) ** 2))
