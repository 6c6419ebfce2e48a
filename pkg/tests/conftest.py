import json
import os
import subprocess
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

from capflex.fields import Grid


@pytest.fixture(scope="session")
def grid129():
    return Grid(129)


@pytest.fixture(scope="session")
def grid257():
    return Grid(257)


def run_cli(args, cwd=None, timeout=3600):
    """Run the console entry point in a fresh interpreter; returns the completed process."""
    cmd = [sys.executable, "-m", "capflex"] + [str(a) for a in args]
    return subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, timeout=timeout)


@pytest.fixture(scope="session")
def default_build(tmp_path_factory):
    """The default full-resolution build, run once per session.

    Set ``CAPFLEX_BUILD_DIR`` to reuse the output directory of an earlier
    ``capflex build`` with default settings.
    """
    reuse = os.environ.get("CAPFLEX_BUILD_DIR")
    if reuse and (Path(reuse) / "report.json").exists():
        out = Path(reuse)
        report = json.loads((out / "report.json").read_text())
        return SimpleNamespace(dir=out, exit_code=report["exit_code"], report=report, stderr="", elapsed=None)
    return _fresh_build(tmp_path_factory.mktemp("default_build"))


def _fresh_build(workdir):
    # plain `capflex build` from an empty directory, so the config (including
    # the relative output directory) is identical across runs
    out = workdir / "capflex_out"
    start = time.perf_counter()
    proc = run_cli(["build"], cwd=workdir)
    elapsed = time.perf_counter() - start
    report = json.loads((out / "report.json").read_text())
    return SimpleNamespace(dir=out, exit_code=proc.returncode, report=report, stderr=proc.stderr, elapsed=elapsed)


@pytest.fixture(scope="session")
def second_build(tmp_path_factory, default_build):
    """An independent second default build, for the determinism check."""
    return _fresh_build(tmp_path_factory.mktemp("second_build"))
