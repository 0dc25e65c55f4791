import subprocess
import sys
from pathlib import Path

import pytest

AGEPOP = (sys.executable, "-m", "agepop.cli")


def agepop_available() -> bool:
    try:
        proc = subprocess.run(
            [*AGEPOP, "--help"], capture_output=True, text=True, timeout=60
        )
        return proc.returncode == 0
    except (OSError, subprocess.TimeoutExpired):
        return False


requires_agepop = pytest.mark.skipif(
    not agepop_available(), reason="toolkit CLI not installed"
)


@pytest.fixture(scope="session")
def dataset_200(tmp_path_factory) -> Path:
    """Small dataset generated through the toolkit CLI."""
    if not agepop_available():
        pytest.skip("toolkit CLI not installed")
    path = tmp_path_factory.mktemp("data") / "train200.jsonl"
    proc = subprocess.run(
        [*AGEPOP, "dataset", "--n", "200", "--seed", "77", "--out", str(path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return path


@pytest.fixture(scope="session")
def dataset_1000(tmp_path_factory) -> Path:
    """Full-size training dataset for the acceptance run."""
    if not agepop_available():
        pytest.skip("toolkit CLI not installed")
    path = tmp_path_factory.mktemp("data") / "train1000.jsonl"
    proc = subprocess.run(
        [*AGEPOP, "dataset", "--n", "1000", "--seed", "1", "--out", str(path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return path
