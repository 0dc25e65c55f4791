"""Command-line front end.

Subcommands: solve, dataset, simulate, adaptive, robustness,
audit-lipschitz, audit-surrogate.  File-producing commands write a
manifest (config, seeds, package version, config hash) beside their
outputs; identical (config, seed) runs produce byte-identical files.
Report paths render PNG figures alongside the delimited output unless
--no-plot is given.

Exit codes:
  0  success
  2  domain error (e.g. reproduction number <= 1: not in set B)
  3  solver failed to converge
  4  infeasible equilibrium setpoint
  5  no certifiable level for the requested budget
  6  schema/shape/config validation error
  7  simulation breakdown (extinction or state blowup)
  1  unexpected failure
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AdaptiveGains, simulate_adaptive
from .control import ControllerConfig, LogDeviations, hatted_quantities, zero_ledger
from .dynamics import manifold_state, simulate_closed_loop_pde
from .equilibrium import build_equilibrium, build_species, setpoint_for_dilution
from .errors import (
    BlowupError,
    CertificateError,
    ConvergenceError,
    DomainError,
    ExtinctionError,
    SetpointError,
    ShapeError,
)
from .grids import AgeGrid, AgeProfile, envelope_bounds_from_box, FamilyParams
from .operators import (
    generation_time,
    interaction_gain,
    lipschitz_audit,
    lotka_sharpe_integral,
    monotonicity_audit,
    reproductive_value,
    solve_growth_rate,
)
from .reporting import (
    plot_adaptive,
    plot_closed_loop,
    plot_sweep,
    write_adaptive_csv,
    write_manifest,
    write_sweep_csv,
    write_trajectory_csv,
)
from .robustness import robustness_sweep
from .surrogate import (
    DatasetRecord,
    error_budget_audit,
    exact_evaluator,
    generate_dataset,
    generate_record,
    load_model,
    model_evaluator,
    read_dataset,
    verify_dataset,
    write_dataset,
)

EXIT_CODES = {
    DomainError: 2,
    ConvergenceError: 3,
    SetpointError: 4,
    CertificateError: 5,
    ShapeError: 6,
    ValueError: 6,
    ExtinctionError: 7,
    BlowupError: 7,
}


def _exit_code(exc: Exception) -> int:
    for klass, code in EXIT_CODES.items():
        if isinstance(exc, klass):
            return code
    return 1


def _error_payload(exc: Exception) -> dict:
    return {"error": type(exc).__name__, "message": str(exc)}


def _parse_sample(text: str) -> tuple[int, int]:
    try:
        seed, index = text.split(":")
        return int(seed), int(index)
    except ValueError as exc:
        raise ShapeError(f"--sample expects SEED:INDEX, got {text!r}") from exc


def _load_profiles(path: str, grid_points: int | None) -> dict:
    doc = json.loads(Path(path).read_text())
    out = {}
    for name in ("k", "mu", "g"):
        if name in doc:
            out[name] = AgeProfile.from_dict(
                {"max_age": doc["max_age"], "values": doc[name]}, grid_points
            )
    return out


def _species_from_args(sample: str | None, profiles: str | None,
                       grid: AgeGrid):
    """(k, mu, g) profiles from either a dataset-sample reference or a file."""
    if sample is not None:
        seed, index = _parse_sample(sample)
        rec, _ = generate_record(seed, index, grid)
        return (
            AgeProfile(grid, rec.k), AgeProfile(grid, rec.mu), AgeProfile(grid, rec.g)
        )
    if profiles is not None:
        loaded = _load_profiles(profiles, grid.n_points)
        missing = {"k", "mu", "g"} - set(loaded)
        if missing:
            raise ShapeError(f"profiles file lacks {sorted(missing)}")
        return loaded["k"], loaded["mu"], loaded["g"]
    raise ShapeError("species needs either a sample reference or a profiles file")


class OutputTracker:
    """Removes partially written outputs when a command fails."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path) -> Path:
        p = Path(path)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args, tracker) -> int:
    grid = AgeGrid(args.max_age, args.grid_points)
    if args.sample is not None:
        seed, index = _parse_sample(args.sample)
        rec, _ = generate_record(seed, index, grid)
        k = AgeProfile(grid, rec.k)
        mu = AgeProfile(grid, rec.mu)
        g = AgeProfile(grid, rec.g)
    elif args.family_params is not None:
        from .grids import sample_family

        params = FamilyParams(**json.loads(Path(args.family_params).read_text()))
        k, mu, g = sample_family(params, grid)
    else:
        if args.profiles is None:
            raise ShapeError("solve needs --sample, --profiles, or --family-params")
        loaded = _load_profiles(args.profiles, args.grid_points)
        if "k" not in loaded or "mu" not in loaded:
            raise ShapeError("profiles file must contain k and mu")
        k, mu = loaded["k"], loaded["mu"]
        g = loaded.get("g")

    root = solve_growth_rate(k, mu, args.tol)
    kappa = generation_time(k, mu, root.zeta)
    pi0 = reproductive_value(k, mu, root.zeta)
    out = {
        "zeta": root.zeta,
        "residual": root.residual,
        "lower_bound": root.lower_bound,
        "upper_bound": root.upper_bound,
        "iterations": root.iterations,
        "r0": lotka_sharpe_integral(k, mu, 0.0),
        "kappa": kappa,
        "pi0_at_zero": float(pi0.values[0]),
        "pi0_max": float(pi0.values.max()),
    }
    if g is not None:
        out["gamma_self"] = interaction_gain(g, root.zeta, mu)
    if args.oracle:
        fine = grid.refined(10)
        k_f = k.resample(fine)
        mu_f = mu.resample(fine)
        oracle = solve_growth_rate(k_f, mu_f, args.tol)
        out["oracle_zeta"] = oracle.zeta
        out["oracle_gap"] = abs(oracle.zeta - root.zeta)
    print(json.dumps(out, indent=2))
    return 0


# ---------------------------------------------------------------------------
# dataset


def cmd_dataset(args, tracker) -> int:
    grid = AgeGrid(args.max_age, args.grid_points)
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(
                pool.map(
                    _dataset_worker,
                    [(args.seed, i, grid.max_age, grid.n_points) for i in range(args.n)],
                    chunksize=max(1, args.n // (4 * args.jobs)),
                )
            )
        records = [DatasetRecord.from_json(line) for line in results]
        stats = {"n": args.n, "seed": args.seed, "jobs": args.jobs}
    else:
        records, stats = generate_dataset(args.n, args.seed, grid)
    out_path = tracker.add(args.out)
    write_dataset(out_path, records)
    check = verify_dataset(records)
    if not check["ok"]:
        raise DomainError(f"generated dataset failed verification: {check}")
    write_manifest(
        tracker.add(str(out_path) + ".manifest.json"),
        {
            "command": "dataset",
            "version": __version__,
            "n": args.n,
            "seed": args.seed,
            "grid_points": args.grid_points,
            "max_age": args.max_age,
            "verification": check,
            "stats": stats,
        },
    )
    print(json.dumps({"written": str(out_path), **check}))
    return 0


def _dataset_worker(task) -> str:
    seed, index, max_age, n_points = task
    rec, _ = generate_record(seed, index, AgeGrid(max_age, n_points))
    return rec.to_json()


# ---------------------------------------------------------------------------
# shared run setup


def _resolve_controls(args) -> dict:
    """Flags > config file > defaults for the controller quantities."""
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text())

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    return {
        "beta": pick(args.beta, "beta", 0.8),
        "epsilon": pick(args.epsilon, "epsilon", 0.2),
        "x1_star0": pick(args.x1_star0, "x1_star0"),
        "u_star": pick(args.u_star, "u_star"),
        "delta": file_cfg.get("delta"),
    }


def _build_setup(args):
    grid = AgeGrid(args.max_age, args.grid_points)
    k1, mu1, g1 = _species_from_args(args.prey_sample, args.prey_profiles, grid)
    k2, mu2, g2 = _species_from_args(args.predator_sample, args.predator_profiles, grid)
    prey = build_species(k1, mu1, g1)
    predator = build_species(k2, mu2, g2)
    controls = _resolve_controls(args)
    cfg = ControllerConfig(beta=controls["beta"], epsilon=controls["epsilon"])
    if controls["x1_star0"] is not None:
        x1_star0 = controls["x1_star0"]
    elif controls["u_star"] is not None:
        gamma2 = interaction_gain(predator.g, prey.zeta, prey.mu)
        x1_star0 = setpoint_for_dilution(
            prey.zeta, predator.zeta, gamma2, controls["u_star"]
        )
    else:
        raise ShapeError(
            "need --x1-star0 or --u-star (flag or config file) to pin the setpoint"
        )
    eq = build_equilibrium(prey, predator, x1_star0)
    return prey, predator, eq, cfg, controls


def _setup_manifest(args, eq, controls) -> dict:
    return {
        "version": __version__,
        "grid_points": args.grid_points,
        "max_age": args.max_age,
        "prey_sample": args.prey_sample,
        "predator_sample": args.predator_sample,
        "prey_profiles": args.prey_profiles,
        "predator_profiles": args.predator_profiles,
        "config_file": getattr(args, "config", None),
        "resolved_controls": controls,
        "equilibrium": eq.to_dict(),
    }


def _ledger_for(args, prey, predator, eq, cfg):
    """Ledger fixed from a surrogate's errors, or zero for the exact law."""
    if args.surrogate in (None, "exact"):
        return zero_ledger(prey, predator, eq, cfg), {"surrogate": "exact"}
    model = load_model(args.surrogate)
    z1h = model_evaluator(model)(prey.k, prey.mu)
    z2h = model_evaluator(model)(predator.k, predator.mu)
    ledger = hatted_quantities(
        prey.zeta - z1h, predator.zeta - z2h, prey, predator, eq, cfg
    )
    return ledger, {
        "surrogate": args.surrogate,
        "e1": prey.zeta - z1h,
        "e2": predator.zeta - z2h,
    }


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args, tracker) -> int:
    prey, predator, eq, cfg, controls = _build_setup(args)
    ledger, surrogate_info = _ledger_for(args, prey, predator, eq, cfg)
    eta0 = LogDeviations(*args.eta0)
    ic = manifold_state(prey, predator, eq, eta0)
    traj = simulate_closed_loop_pde(
        ic, args.horizon, prey, predator, eq, cfg,
        ledger=ledger, record_every=args.record_every,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(tracker.add(out_dir / "trajectory.csv"), traj, pde=True)
    if args.plot:
        plot_closed_loop(tracker.add(out_dir / "fig_closed_loop.png"), traj, eq)
    summary = {
        "clamp_events": traj.clamp_events,
        "final_eta": [float(traj.eta1[-1]), float(traj.eta2[-1])],
        "final_boundaries": [float(traj.x1_boundary[-1]), float(traj.x2_boundary[-1])],
        "targets": [eq.x1_star0, eq.x2_star0],
        "min_u": float(traj.u.min()),
    }
    write_manifest(
        tracker.add(out_dir / "manifest.json"),
        {
            "command": "simulate",
            **_setup_manifest(args, eq, controls),
            "eta0": list(args.eta0),
            "horizon": args.horizon,
            "record_every": args.record_every,
            **surrogate_info,
            "summary": summary,
        },
    )
    print(json.dumps({"out": str(out_dir), **summary}))
    return 0


# ---------------------------------------------------------------------------
# robustness


def cmd_robustness(args, tracker) -> int:
    prey, predator, eq, cfg, controls = _build_setup(args)
    deltas = args.deltas
    if deltas is None:
        deltas = [controls["delta"]] if controls["delta"] is not None else [0.005, 0.02]
    rows = robustness_sweep(
        deltas, prey, predator, eq, cfg,
        horizon=args.horizon, dt=args.dt, n_initial=args.n_initial,
        keep_traces=args.plot,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = [row.pop("_trace") for row in rows if "_trace" in row]
    write_sweep_csv(tracker.add(out_dir / "sweep.csv"), rows)
    if args.plot:
        plot_sweep(tracker.add(out_dir / "fig_sweep.png"), rows,
                   [t for t in traces if t is not None])
    ok = all(
        row["invariant"] and row["clamp_events"] == 0 and row["envelope_ok"]
        for row in rows
    )
    write_manifest(
        tracker.add(out_dir / "manifest.json"),
        {
            "command": "robustness",
            **_setup_manifest(args, eq, controls),
            "deltas": list(deltas),
            "horizon": args.horizon,
            "dt": args.dt,
            "n_initial": args.n_initial,
            "rows": [{k: v for k, v in row.items()} for row in rows],
        },
    )
    print(json.dumps({"out": str(out_dir), "all_certified": ok,
                      "c_stars": [row["c_star"] for row in rows]}))
    return 0


# ---------------------------------------------------------------------------
# adaptive


def cmd_adaptive(args, tracker) -> int:
    prey, predator, eq, cfg, controls = _build_setup(args)
    grid = prey.grid
    if args.init_prey_sample:
        seed, index = _parse_sample(args.init_prey_sample)
        rec, _ = generate_record(seed, index, grid)
        k1h, mu1h = AgeProfile(grid, rec.k), AgeProfile(grid, rec.mu)
    else:
        k1h, mu1h = prey.k, prey.mu
    if args.init_predator_sample:
        seed, index = _parse_sample(args.init_predator_sample)
        rec, _ = generate_record(seed, index, grid)
        k2h, mu2h = AgeProfile(grid, rec.k), AgeProfile(grid, rec.mu)
    else:
        k2h, mu2h = predator.k, predator.mu

    model = None
    if args.surrogate not in (None, "exact"):
        model = load_model(args.surrogate)

    snapshot_times = None
    species_pick = {}
    if args.estimates_out:
        rng = np.random.default_rng(args.estimates_seed)
        h = grid.spacing
        n_steps = int(round(args.horizon / h))
        steps = rng.choice(n_steps + 1, size=min(args.estimates_count, n_steps + 1),
                           replace=False)
        # one (fertility, mortality) pair per sampled time point
        species_pick = {
            int(s): int(rng.integers(1, 3)) for s in np.sort(steps)
        }
        snapshot_times = np.array(sorted(species_pick)) * h

    gains = AdaptiveGains(gamma_k=args.gamma_k, gamma_mu=args.gamma_mu,
                          alpha=args.alpha)
    eta0 = LogDeviations(*args.eta0)
    ic = manifold_state(prey, predator, eq, eta0)
    traj = simulate_adaptive(
        ic, (k1h, k2h), (mu1h, mu2h), prey, predator, eq, cfg,
        horizon=args.horizon, gains=gains, model=model,
        record_every=args.record_every, snapshot_times=snapshot_times,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_adaptive_csv(tracker.add(out_dir / "trajectory.csv"), traj)
    if args.plot:
        plot_adaptive(tracker.add(out_dir / "fig_adaptive.png"), traj, eq)
    if args.estimates_out:
        est_path = tracker.add(args.estimates_out)
        h = grid.spacing
        with open(est_path, "w") as fh:
            for snap in traj.estimate_snapshots:
                # keep one species per sampled time so the harvest count
                # matches the requested sample count
                if species_pick.get(int(round(snap["t"] / h))) != snap["species"]:
                    continue
                fh.write(json.dumps({
                    "max_age": grid.max_age,
                    "n_points": grid.n_points,
                    "t": snap["t"],
                    "species": snap["species"],
                    "k": snap["k_hat"].tolist(),
                    "mu": snap["mu_hat"].tolist(),
                    "zeta": snap["zeta_hat"],
                    "r0": snap["r0"],
                }))
                fh.write("\n")
    summary = {
        "clamp_events": traj.clamp_events,
        "surrogate_fallbacks": traj.surrogate_fallbacks,
        "final_boundaries": [float(traj.x1_boundary[-1]), float(traj.x2_boundary[-1])],
        "targets": [eq.x1_star0, eq.x2_star0],
        "final_zeta_hats": [float(traj.zeta1_hat[-1]), float(traj.zeta2_hat[-1])],
        "true_zetas": [prey.zeta, predator.zeta],
    }
    write_manifest(
        tracker.add(out_dir / "manifest.json"),
        {
            "command": "adaptive",
            **_setup_manifest(args, eq, controls),
            "eta0": list(args.eta0),
            "horizon": args.horizon,
            "gains": {"gamma_k": args.gamma_k, "gamma_mu": args.gamma_mu,
                      "alpha": args.alpha},
            "init_prey_sample": args.init_prey_sample,
            "init_predator_sample": args.init_predator_sample,
            "estimates_out": args.estimates_out,
            "estimates_count": args.estimates_count,
            "estimates_seed": args.estimates_seed,
            "surrogate": args.surrogate or "exact",
            "summary": summary,
        },
    )
    print(json.dumps({"out": str(out_dir), **summary}))
    return 0


# ---------------------------------------------------------------------------
# audits


def _default_audit_box():
    lows = FamilyParams(
        k_base=0.60, k_amp=2.5, k_center=0.20, k_sigma=0.16,
        mu_base=0.03, mu_juv_amp=0.05, mu_juv=5.0, mu_sen_amp=0.03, mu_sen=2.5,
        g_base=0.05, g_amp=0.20, g_center=0.37, g_sigma=0.05,
    )
    highs = FamilyParams(
        k_base=0.80, k_amp=3.0, k_center=0.26, k_sigma=0.23,
        mu_base=0.05, mu_juv_amp=0.08, mu_juv=5.5, mu_sen_amp=0.05, mu_sen=2.9,
        g_base=0.13, g_amp=0.50, g_center=0.63, g_sigma=0.31,
    )
    return lows, highs


def audit_lipschitz(args, tracker) -> int:
    grid = AgeGrid(args.max_age, args.grid_points)
    lows, highs = _default_audit_box()
    bounds = envelope_bounds_from_box(lows, highs, grid)
    report = lipschitz_audit(bounds, args.pairs, args.seed, lows, highs)
    mono = monotonicity_audit(bounds, args.mono_pairs, args.seed + 1, lows, highs)
    out = {"lipschitz": report, "monotonicity": mono}
    if args.out:
        path = tracker.add(args.out)
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2)
            fh.write("\n")
    print(json.dumps(out, indent=2))
    if not report["bound_satisfied"] or mono["violations"]:
        raise DomainError("Lipschitz audit failed")
    return 0


def audit_surrogate(args, tracker) -> int:
    if args.dataset:
        records = read_dataset(args.dataset)
    else:
        grid = AgeGrid(args.max_age, args.grid_points)
        records, _ = generate_dataset(args.test_n, args.test_seed, grid)
    if args.model == "exact":
        evaluator = exact_evaluator()
    else:
        evaluator = model_evaluator(load_model(args.model))
    report = error_budget_audit(evaluator, records, args.delta)
    if args.out:
        path = tracker.add(args.out)
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    print(json.dumps(report, indent=2))
    return 0 if report["certified"] else 5


# ---------------------------------------------------------------------------
# parser


def _add_setup_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="controller config JSON "
                   '({"beta":, "epsilon":, "delta":, "x1_star0":, "u_star":}); '
                   "explicit flags take precedence")
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--max-age", type=float, default=1.0)
    p.add_argument("--prey-sample", metavar="SEED:INDEX",
                   help="dataset-stream reference for the prey rates")
    p.add_argument("--predator-sample", metavar="SEED:INDEX")
    p.add_argument("--prey-profiles", help="JSON file with k/mu/g arrays")
    p.add_argument("--predator-profiles")
    p.add_argument("--beta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--u-star", type=float, help="commanded equilibrium dilution")
    p.add_argument("--x1-star0", type=float, help="commanded prey newborn level")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agepop",
        description="Age-structured predator-prey control toolkit",
        epilog="Exit codes:" + __doc__.split("Exit codes:")[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the growth rate for one species")
    p.add_argument("--sample", metavar="SEED:INDEX")
    p.add_argument("--profiles", help="JSON file with k/mu (and optional g)")
    p.add_argument("--family-params",
                   help="JSON file with the 13 family parameters")
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--max-age", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--oracle", action="store_true",
                   help="also report a 10x-finer-grid solve and the gap")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("dataset", help="generate a training dataset (JSONL)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--max-age", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("simulate", help="closed-loop transport simulation")
    _add_setup_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=float, default=30.0)
    p.add_argument("--eta0", type=float, nargs=2, default=(0.7, -0.7),
                   help="initial log deviations (prey-dominant by default)")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--surrogate", help="model file, or 'exact'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("robustness", help="certificate sweep over error budgets")
    _add_setup_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--deltas", type=float, nargs="+",
                   help="error budgets (default 0.005 0.02, or config delta)")
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--n-initial", type=int, default=8)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("adaptive", help="adaptive closed loop with estimation")
    _add_setup_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=float, default=25.0)
    p.add_argument("--eta0", type=float, nargs=2, default=(0.7, -0.7))
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--surrogate", help="model file, or 'exact'")
    p.add_argument("--init-prey-sample", metavar="SEED:INDEX",
                   help="mismatched initial estimates (defaults to truth)")
    p.add_argument("--init-predator-sample", metavar="SEED:INDEX")
    p.add_argument("--gamma-k", type=float, default=10.0)
    p.add_argument("--gamma-mu", type=float, default=10.0)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--estimates-out", help="JSONL harvest of estimate snapshots")
    p.add_argument("--estimates-count", type=int, default=200)
    p.add_argument("--estimates-seed", type=int, default=0)
    p.set_defaults(func=cmd_adaptive)

    p = sub.add_parser("audit-lipschitz",
                       help="empirical class-constant audit")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--mono-pairs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--max-age", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=audit_lipschitz)

    p = sub.add_parser("audit-surrogate",
                       help="error-budget audit of a surrogate model")
    p.add_argument("--model", required=True, help="model file, or 'exact'")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--dataset", help="JSONL test set (else generated)")
    p.add_argument("--test-n", type=int, default=100)
    p.add_argument("--test-seed", type=int, default=9000)
    p.add_argument("--grid-points", type=int, default=201)
    p.add_argument("--max-age", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=audit_surrogate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    tracker = OutputTracker()
    try:
        return args.func(args, tracker)
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        tracker.cleanup()
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
