#!/usr/bin/env python
"""Quality gate for the simulator: lint, the two test suites, coverage and a smoke ``check`` run.

    python quality/quality_check.py            # lint, fast suite, coverage, smoke check
    python quality/quality_check.py --slow     # adds the slow statistical suite
    python quality/quality_check.py --only lint fast
"""

import argparse
import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

QUALITY_DIR = Path(__file__).resolve().parent
REPO_ROOT = QUALITY_DIR.parent


@dataclass(frozen=True)
class Step:
    key: str
    title: str
    cmd: list[str]
    slow: bool = False


def steps(smoke_dir: Path) -> list[Step]:
    pytest = [sys.executable, "-m", "pytest", "--tb=short"]
    coverage = pytest + ["--cov=modules", "--cov=app", "--cov-report=term-missing"]
    return [
        Step("lint", "Ruff (pyflakes, pycodestyle)", ["ruff", "check", ".", "--select=F,W,E"]),
        Step("fast", "Pytest, fast suite", pytest + ["-v"]),
        Step("slow", "Pytest, slow statistical suite", pytest + ["-v", "-m", "slow"], slow=True),
        Step("coverage", "Coverage of modules/ and app.py", coverage),
        # a shrunk example1: every row of the check report must pass
        Step("smoke", "Built-in checks on a small example1", [
            sys.executable, "app.py", "check", "--N", "200", "--N-scale", "200", "--nx", "21", "--nu", "21",
            "--t-end", "0.5", "--out-dir", str(smoke_dir),
        ]),
    ]


def run_step(step: Step) -> bool:
    print(f"\n{'=' * 60}")
    print(f"[CHECK] {step.title}")
    print(f"{'=' * 60}")
    env = os.environ.copy()
    if "--cov=modules" in step.cmd:
        env["COVERAGE_FILE"] = str(QUALITY_DIR / ".coverage")
    try:
        return subprocess.run(step.cmd, cwd=REPO_ROOT, env=env).returncode == 0
    except OSError as e:
        print(f"[FAIL] {step.key}: {e}")
        return False


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--slow", action="store_true", help="also run the slow statistical suite")
    parser.add_argument("--only", nargs="+", metavar="STEP", help="run just these steps")
    args = parser.parse_args(argv)

    with tempfile.TemporaryDirectory(prefix="quality-smoke-") as smoke_dir:
        plan = steps(Path(smoke_dir))
        if args.only:
            unknown = set(args.only) - {s.key for s in plan}
            if unknown:
                parser.error(f"unknown steps {sorted(unknown)}")
            plan = [s for s in plan if s.key in args.only]
        elif not args.slow:
            plan = [s for s in plan if not s.slow]
        results = [(step, run_step(step)) for step in plan]

    print(f"\n{'=' * 60}")
    print("SUMMARY")
    print(f"{'=' * 60}")
    for step, passed in results:
        print(f"{'[PASS]' if passed else '[FAIL]'} {step.key:<9} {step.title}")
    if all(passed for _, passed in results):
        print("\n[SUCCESS] All quality checks passed!")
        return 0
    print("\n[ERROR] Some checks failed - fix errors above")
    return 1


if __name__ == "__main__":
    sys.exit(main())
