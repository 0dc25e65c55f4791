"""Network definitions: the dense export family and the spectral reference.

The dense family is what gets exported (affine layers + named pointwise
activations, matching the portable "v1" weights format).  The spectral
reference model (lifting, four Fourier-mode convolution blocks of width
64 with 16 modes, pooled linear head) is a teacher only; it never leaves
the trainer except through distillation into a dense student.
"""

from __future__ import annotations

import torch


def build_dense(
    in_dim: int,
    hidden: tuple[int, ...] = (128, 128, 64),
    activation: str = "gelu",
    seed: int = 0,
) -> torch.nn.Sequential:
    torch.manual_seed(seed)
    acts = {"gelu": torch.nn.GELU, "tanh": torch.nn.Tanh, "relu": torch.nn.ReLU}
    layers: list[torch.nn.Module] = []
    dim = in_dim
    for width in hidden:
        layers += [torch.nn.Linear(dim, width, dtype=torch.float64), acts[activation]()]
        dim = width
    layers.append(torch.nn.Linear(dim, 1, dtype=torch.float64))
    return torch.nn.Sequential(*layers)


class SpectralConv1d(torch.nn.Module):
    """Fourier-mode 1-D convolution: keep the lowest `modes` frequencies."""

    def __init__(self, channels: int, modes: int):
        super().__init__()
        self.modes = modes
        scale = 1.0 / channels
        self.weight = torch.nn.Parameter(
            scale * torch.randn(channels, channels, modes, dtype=torch.cfloat)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, C, N)
        x_ft = torch.fft.rfft(x)
        out_ft = torch.zeros_like(x_ft)
        m = min(self.modes, x_ft.shape[-1])
        out_ft[..., :m] = torch.einsum(
            "bim,iom->bom", x_ft[..., :m], self.weight[..., :m]
        )
        return torch.fft.irfft(out_ft, n=x.shape[-1])


class ReferenceFNO(torch.nn.Module):
    """Function-to-scalar spectral network used as a distillation teacher.

    Input channels are the two rate functions plus the age coordinate;
    the head averages over the grid and projects to the scalar output.
    """

    def __init__(self, grid_size: int, width: int = 64, modes: int = 16,
                 n_layers: int = 4, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.grid_size = grid_size
        self.lift = torch.nn.Conv1d(3, width, kernel_size=1)
        self.spectral = torch.nn.ModuleList(
            SpectralConv1d(width, modes) for _ in range(n_layers)
        )
        self.pointwise = torch.nn.ModuleList(
            torch.nn.Conv1d(width, width, kernel_size=1) for _ in range(n_layers)
        )
        self.head = torch.nn.Linear(width, 1)
        coords = torch.linspace(0.0, 1.0, grid_size)
        self.register_buffer("coords", coords)

    def forward(self, features: torch.Tensor) -> torch.Tensor:  # (B, 2*N)
        b = features.shape[0]
        n = self.grid_size
        k = features[:, :n]
        mu = features[:, n:]
        coords = self.coords.expand(b, n)
        x = torch.stack([k, mu, coords], dim=1).float()
        x = self.lift(x)
        for spec, point in zip(self.spectral, self.pointwise):
            x = torch.nn.functional.gelu(spec(x) + point(x))
        return self.head(x.mean(dim=-1)).double()
