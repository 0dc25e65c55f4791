"""Adaptive-dataset harvesting through the simulation toolkit's CLI.

Runs closed-loop adaptive simulations as subprocesses, collects the
estimate snapshots each run dumps, filters out records outside the solver
domain, and merges everything into one JSON Lines training set.  The only
coupling to the toolkit is its command line and file formats.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

DEFAULT_AGEPOP_CMD = (sys.executable, "-m", "agepop.cli")


class HarvestError(RuntimeError):
    """A simulation subprocess failed or yielded too few valid records."""


def run_one(
    index: int,
    samples: int,
    margin: int,
    work_dir: Path,
    agepop_cmd=DEFAULT_AGEPOP_CMD,
    base_seed: int = 1000,
    init_seed: int = 5000,
    horizon: float = 20.0,
    grid_points: int = 101,
    u_star: float = 0.15,
) -> list[dict]:
    """One adaptive run; returns `samples` valid (k_hat, mu_hat, zeta) records."""
    est_path = work_dir / f"estimates_{index}.jsonl"
    out_dir = work_dir / f"run_{index}"
    cmd = [
        *agepop_cmd, "adaptive",
        "--out", str(out_dir),
        "--prey-sample", f"{base_seed + index}:0",
        "--predator-sample", f"{base_seed + index}:1",
        "--init-prey-sample", f"{init_seed + index}:0",
        "--init-predator-sample", f"{init_seed + index}:1",
        "--u-star", str(u_star),
        "--horizon", str(horizon),
        "--grid-points", str(grid_points),
        "--estimates-out", str(est_path),
        "--estimates-count", str(samples + margin),
        "--estimates-seed", str(index),
        "--record-every", "100",
        "--no-plot",
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise HarvestError(
            f"run {index} exited {proc.returncode}: {proc.stderr.strip()[:500]}"
        )
    records = []
    excluded = 0
    with open(est_path) as fh:
        for line in fh:
            doc = json.loads(line)
            if doc["r0"] > 1.0:
                records.append(doc)
            else:
                excluded += 1
    if len(records) < samples:
        raise HarvestError(
            f"run {index}: only {len(records)} valid records "
            f"({excluded} excluded), need {samples}"
        )
    return records[:samples]


def harvest(
    runs: int,
    samples_per_run: int,
    out_path,
    agepop_cmd=DEFAULT_AGEPOP_CMD,
    jobs: int = 1,
    margin: int = 16,
    **run_kwargs,
) -> dict:
    """Full §-style regimen: runs x samples_per_run merged records."""
    work_dir = Path(tempfile.mkdtemp(prefix="agepop_harvest_"))
    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                batches = list(
                    pool.map(
                        lambda i: run_one(
                            i, samples_per_run, margin, work_dir,
                            agepop_cmd, **run_kwargs,
                        ),
                        range(runs),
                    )
                )
        else:
            batches = [
                run_one(i, samples_per_run, margin, work_dir, agepop_cmd,
                        **run_kwargs)
                for i in range(runs)
            ]
        with open(out_path, "w") as fh:
            for batch in batches:
                for doc in batch:
                    fh.write(json.dumps(doc))
                    fh.write("\n")
        return {
            "runs": runs,
            "samples_per_run": samples_per_run,
            "records": runs * samples_per_run,
            "out": str(out_path),
        }
    finally:
        shutil.rmtree(work_dir, ignore_errors=True)


def spot_check_labels(
    dataset_path, n_checks: int = 5, seed: int = 0,
    agepop_cmd=DEFAULT_AGEPOP_CMD, tol: float = 1e-10,
) -> dict:
    """Re-solve a seeded sample of harvested labels through the toolkit CLI."""
    import numpy as np

    lines = Path(dataset_path).read_text().splitlines()
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(lines), size=min(n_checks, len(lines)), replace=False)
    worst = 0.0
    with tempfile.TemporaryDirectory() as tmp:
        for i in picks:
            doc = json.loads(lines[i])
            profile_path = Path(tmp) / "profile.json"
            profile_path.write_text(json.dumps(
                {"max_age": doc["max_age"], "k": doc["k"], "mu": doc["mu"]}
            ))
            proc = subprocess.run(
                [*agepop_cmd, "solve", "--profiles", str(profile_path),
                 "--grid-points", str(doc["n_points"])],
                capture_output=True, text=True,
            )
            if proc.returncode != 0:
                raise HarvestError(f"label check failed: {proc.stderr[:300]}")
            solved = json.loads(proc.stdout)
            worst = max(worst, abs(solved["zeta"] - doc["zeta"]))
    return {"checked": len(picks), "worst_label_gap": worst, "ok": worst <= tol}
