import subprocess
import sys

import pytest

SOLVER = [sys.executable, "-m", "mfgfw.cli"]


def run_solver(*args):
    proc = subprocess.run([*SOLVER, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"solver failed: {proc.stderr}")


@pytest.fixture(scope="session")
def desk_outputs(tmp_path_factory):
    """Desk-scale solver outputs generated once through the CLI."""
    root = tmp_path_factory.mktemp("runs")
    run_solver("run", "--preset", "desk", "--stepsize", "open-loop",
               "--iters", "60", "--out", str(root / "desk-open"))
    run_solver("run", "--preset", "desk", "--stepsize", "line-search",
               "--iters", "40", "--out", str(root / "desk-line"))
    run_solver("sweep", "--preset", "desk-sweep", "--stepsize", "open-loop",
               "--iters", "25", "--out", str(root / "sweep"))
    return root
