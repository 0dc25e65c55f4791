"""Delimited output and figure rendering for the command-line report paths.

CSV schemas are fixed per run type; floats are written with repr so that
identical runs produce byte-identical files.  Figures are rendered with
the Agg backend straight to PNG next to the delimited output.
"""

from __future__ import annotations

import csv
import json

import numpy as np

TRAJECTORY_COLUMNS = [
    "t", "eta1", "eta2", "u", "V1", "r",
    "x1_boundary", "x2_boundary", "x1_total", "x2_total",
]

ADAPTIVE_EXTRA_COLUMNS = [
    "zeta1_hat", "zeta2_hat", "k1_err_sup", "k2_err_sup",
    "mu1_err_sup", "mu2_err_sup", "surrogate_fallbacks",
]

SWEEP_COLUMNS = [
    "delta", "c_star", "C_R_empirical", "C_R_constructive",
    "max_V1_excursion", "clamp_events", "tail_r", "mu_c",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def trajectory_rows(traj, pde: bool) -> list[dict]:
    rows = []
    for i in range(traj.t.size):
        row = {
            "t": traj.t[i],
            "eta1": traj.eta1[i],
            "eta2": traj.eta2[i],
            "u": traj.u[i],
            "V1": traj.v1[i],
            "r": traj.r[i],
        }
        if pde:
            row.update(
                x1_boundary=traj.x1_boundary[i],
                x2_boundary=traj.x2_boundary[i],
                x1_total=traj.x1_total[i],
                x2_total=traj.x2_total[i],
            )
        rows.append(row)
    return rows


def write_trajectory_csv(path, traj, pde: bool = True) -> None:
    write_csv(path, TRAJECTORY_COLUMNS, trajectory_rows(traj, pde))


def write_adaptive_csv(path, traj) -> None:
    rows = []
    for i in range(traj.t.size):
        rows.append(
            {
                "t": traj.t[i],
                "eta1": traj.eta1[i],
                "eta2": traj.eta2[i],
                "u": traj.u[i],
                "V1": traj.v1[i],
                "r": traj.r[i],
                "x1_boundary": traj.x1_boundary[i],
                "x2_boundary": traj.x2_boundary[i],
                "zeta1_hat": traj.zeta1_hat[i],
                "zeta2_hat": traj.zeta2_hat[i],
                "k1_err_sup": traj.k1_err_sup[i],
                "k2_err_sup": traj.k2_err_sup[i],
                "mu1_err_sup": traj.mu1_err_sup[i],
                "mu2_err_sup": traj.mu2_err_sup[i],
                "surrogate_fallbacks": traj.surrogate_fallbacks,
            }
        )
    write_csv(
        path,
        TRAJECTORY_COLUMNS[:6] + ["x1_boundary", "x2_boundary"] + ADAPTIVE_EXTRA_COLUMNS,
        rows,
    )


def write_sweep_csv(path, rows) -> None:
    out = []
    for row in rows:
        out.append({
            "delta": row["delta"],
            "c_star": row["c_star"],
            "C_R_empirical": row["C_R_empirical"],
            "C_R_constructive": row["C_R_constructive"],
            "max_V1_excursion": row["max_V1_excursion"],
            "clamp_events": row["clamp_events"],
            "tail_r": row["tail_r"],
            "mu_c": row["mu_c"],
        })
    write_csv(path, SWEEP_COLUMNS, out)


def write_manifest(path, payload: dict) -> None:
    import hashlib

    canonical = json.dumps(payload, sort_keys=True)
    doc = dict(payload, config_sha256=hashlib.sha256(canonical.encode()).hexdigest())
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Figures (matplotlib imported lazily; Agg only).


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def plot_closed_loop(path, traj, eq=None) -> None:
    """Boundary concentrations vs targets, dilution, and reduced coordinates."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.6))
    ax = axes[0]
    ax.plot(traj.t, traj.x1_boundary, label="prey newborns", color="tab:blue")
    ax.plot(traj.t, traj.x2_boundary, label="predator newborns", color="tab:orange")
    if eq is not None:
        ax.axhline(eq.x1_star0, ls="--", color="tab:blue", alpha=0.6)
        ax.axhline(eq.x2_star0, ls="--", color="tab:orange", alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("x_i(0, t)")
    ax.legend(fontsize=8)

    ax = axes[1]
    ax.plot(traj.t, traj.u, color="tab:green")
    if eq is not None:
        ax.axhline(eq.u_star, ls="--", color="tab:green", alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("dilution u(t)")
    ax.set_ylim(bottom=min(0.0, float(np.min(traj.u))))

    ax = axes[2]
    ax.plot(traj.t, traj.eta1, label="eta1")
    ax.plot(traj.t, traj.eta2, label="eta2")
    ax.set_xlabel("t")
    ax.set_ylabel("log deviations")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_adaptive(path, traj, eq=None) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(12.5, 3.6))
    ax = axes[0]
    ax.plot(traj.t, traj.x1_boundary, label="prey newborns", color="tab:blue")
    ax.plot(traj.t, traj.x2_boundary, label="predator newborns", color="tab:orange")
    if eq is not None:
        ax.axhline(eq.x1_star0, ls="--", color="tab:blue", alpha=0.6)
        ax.axhline(eq.x2_star0, ls="--", color="tab:orange", alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("x_i(0, t)")
    ax.legend(fontsize=8)

    ax = axes[1]
    ax.plot(traj.t, traj.zeta1_hat, label="growth rate 1 (resolved)")
    ax.plot(traj.t, traj.zeta2_hat, label="growth rate 2 (resolved)")
    ax.set_xlabel("t")
    ax.set_ylabel("resolved growth rates")
    ax.legend(fontsize=8)

    ax = axes[2]
    ax.semilogy(traj.t, np.maximum(traj.boundary_pred_err_1, 1e-16),
                label="renewal residual 1")
    ax.semilogy(traj.t, np.maximum(traj.boundary_pred_err_2, 1e-16),
                label="renewal residual 2")
    ax.set_xlabel("t")
    ax.set_ylabel("boundary prediction error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_sweep(path, rows, trajectories=None) -> None:
    """Certified levels per budget; optionally radius traces vs envelopes."""
    plt = _pyplot()
    n_panels = 2 if trajectories else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(6.0 * n_panels, 3.8), squeeze=False)
    ax = axes[0, 0]
    deltas = [row["delta"] for row in rows]
    ax.plot(deltas, [row["c_star"] for row in rows], "o-", label="c*")
    ax.plot(deltas, [row["max_V1_excursion"] for row in rows], "s--",
            label="max V1 excursion")
    ax.set_xlabel("error budget delta")
    ax.set_ylabel("Lyapunov level")
    ax.legend(fontsize=8)
    if trajectories:
        ax = axes[0, 1]
        for label, t, r, env in trajectories:
            line, = ax.semilogy(t, np.maximum(r, 1e-16), label=f"r, {label}")
            ax.semilogy(t, env, ls="--", color=line.get_color(), alpha=0.6)
        ax.set_xlabel("t")
        ax.set_ylabel("radius vs envelope")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
