#!/usr/bin/env python3
"""
Task runner for seastate-spde.

Usage:
    python dev.py <task> [<task> ...]

Tasks:
    test     full suite with coverage
    quick    suite without tests marked slow
    slow     only the tests marked slow (fits and covariance checks)
    format   black and isort in place
    lint     ruff, mypy and bandit
    check    format check, lint and the quick suite
    clean    remove caches and coverage output
"""

import shutil
import subprocess  # nosec B404 - fixed argument lists, no shell
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
PY = sys.executable
SOURCES = ["src/", "tests/"]

Step = tuple[str, list[str]]

FORMAT_CHECK: list[Step] = [
    ("black --check", [PY, "-m", "black", "--check", *SOURCES]),
    ("isort --check-only", [PY, "-m", "isort", "--check-only", *SOURCES]),
]
LINT: list[Step] = [
    ("ruff", [PY, "-m", "ruff", "check", *SOURCES]),
    ("mypy", [PY, "-m", "mypy", "src/"]),
    ("bandit", [PY, "-m", "bandit", "-q", "-r", "src/"]),
]
QUICK: list[Step] = [("pytest -m 'not slow'", [PY, "-m", "pytest", "-m", "not slow", "--no-cov"])]

TASKS: dict[str, list[Step]] = {
    "test": [("pytest", [PY, "-m", "pytest"])],
    "quick": QUICK,
    "slow": [("pytest -m slow", [PY, "-m", "pytest", "-m", "slow", "--no-cov"])],
    "format": [
        ("black", [PY, "-m", "black", *SOURCES]),
        ("isort", [PY, "-m", "isort", *SOURCES]),
    ],
    "lint": LINT,
    "check": FORMAT_CHECK + LINT + QUICK,
}

CACHES = [".pytest_cache", ".mypy_cache", ".ruff_cache", "htmlcov", ".coverage", "coverage.xml"]


def run_steps(steps: list[Step]) -> bool:
    """Run every step, even after a failure, and report whether all passed."""
    ok = True
    for name, argv in steps:
        print(f"-> {name}")
        code = subprocess.run(argv, cwd=ROOT).returncode  # nosec B603
        if code != 0:
            print(f"   {name} failed with exit code {code}")
            ok = False
    return ok


def clean() -> bool:
    for name in CACHES:
        path = ROOT / name
        if path.is_dir():
            shutil.rmtree(path)
        elif path.exists():
            path.unlink()
    for package in SOURCES:
        for cache in (ROOT / package).glob("**/__pycache__"):
            shutil.rmtree(cache, ignore_errors=True)
    print("-> caches removed")
    return True


def main(argv: list[str]) -> int:
    unknown = [task for task in argv if task not in TASKS and task != "clean"]
    if not argv or unknown:
        if unknown:
            print(f"Unknown task: {', '.join(unknown)}")
        print(__doc__)
        return 1

    ok = True
    for task in argv:
        ok &= clean() if task == "clean" else run_steps(TASKS[task])
    print("all tasks passed" if ok else "some tasks failed")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
