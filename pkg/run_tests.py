#!/usr/bin/env python3
"""
Test Runner
Runs each tests/test_*.py suite through pytest and prints a pass/fail table.
--quick deselects the training and sampling-frequency tests.
"""

import argparse
import subprocess
import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).parent
TESTS_DIR = PROJECT_ROOT / "tests"

# keyword expression for the tests that train networks or draw large samples
SLOW_TESTS = "learns or beats or fits or frequencies or uniform"


def run_suite(test_path: Path, quick: bool, verbose: bool) -> bool:
    cmd = [sys.executable, "-m", "pytest", str(test_path), "--tb=short", "-q"]
    if verbose:
        cmd.append("-v")
    if quick:
        cmd += ["-k", f"not ({SLOW_TESTS})"]
    result = subprocess.run(cmd, capture_output=True, text=True, cwd=PROJECT_ROOT)
    # 5: every test in the file was deselected
    if result.returncode in (0, 5):
        return True
    print(result.stdout)
    print(result.stderr)
    return False


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Run the tiltshield test suites")
    parser.add_argument("suites", nargs="*", help="test file names, e.g. test_shield.py (default: all)")
    parser.add_argument("--quick", action="store_true", help="skip training and sampling-frequency tests")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    paths = [TESTS_DIR / name for name in args.suites] or sorted(TESTS_DIR.glob("test_*.py"))
    missing = [p.name for p in paths if not p.exists()]
    if missing:
        print(f"Test files not found: {', '.join(missing)}")
        return 1

    print("🚀 Running tiltshield tests" + (" (quick)" if args.quick else ""))
    results = {}
    for path in paths:
        print(f"📋 {path.name}...")
        results[path.name] = run_suite(path, args.quick, args.verbose)

    print("\n" + "=" * 50)
    for name, ok in results.items():
        print(f"{'✅ PASS' if ok else '❌ FAIL'}  {name}")
    passed = sum(results.values())
    print(f"\n🎯 {passed}/{len(results)} test suites passed")
    return 0 if passed == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
