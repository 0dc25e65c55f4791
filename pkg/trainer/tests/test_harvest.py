import json
import subprocess
import sys
from pathlib import Path

import pytest

from agepop_trainer.data import load_records
from agepop_trainer.harvest import harvest, spot_check_labels

from conftest import requires_agepop


@requires_agepop
class TestHarvest:
    def test_small_harvest(self, tmp_path):
        out = tmp_path / "adaptive.jsonl"
        report = harvest(runs=2, samples_per_run=10, out_path=out, jobs=2,
                         horizon=5.0)
        assert report["records"] == 20
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 20
        for rec in lines:
            assert rec["r0"] > 1.0
            assert rec["species"] in (1, 2)
        # harvested files load as training data
        records = load_records(out)
        assert len(records) == 20

    def test_label_spot_check(self, tmp_path):
        out = tmp_path / "adaptive.jsonl"
        harvest(runs=1, samples_per_run=6, out_path=out, horizon=4.0)
        check = spot_check_labels(out, n_checks=3)
        assert check["ok"]
        assert check["worst_label_gap"] <= 1e-10

    def test_cli_harvest(self, tmp_path):
        out = tmp_path / "cli_adaptive.jsonl"
        proc = subprocess.run(
            [sys.executable, "-m", "agepop_trainer.cli", "adaptive-dataset",
             "--runs", "1", "--samples-per-run", "5", "--horizon", "4",
             "--out", str(out), "--check-labels", "2"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(proc.stdout)
        assert doc["records"] == 5
        assert doc["label_check"]["ok"]
