#!/usr/bin/env python3
"""
Configuration Verification Script

Prints the effective snellforge configuration, validates it, and runs the
worked-tree smoke check (v0 = 5 over split stopping times, 1.25 over
ordinary stopping times).
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config import settings  # noqa: E402
from services import load_scenario  # noqa: E402
from solvers.snell import classical_snell_backward, snell_backward  # noqa: E402

WORKED_TREE = settings.BASE_DIR / 'scenarios' / 'worked_tree.json'


def check_config() -> int:
    """Check configuration values and the smoke scenario."""
    print("=" * 60)
    print("Configuration Verification")
    print("=" * 60)
    print()

    for name, value in settings.summary().items():
        print(f"  {name}: {value}")
    print()

    try:
        settings.validate()
        print("✅ Configuration valid")
    except ValueError as e:
        print(f"❌ {e}")
        return 1

    try:
        scenario = load_scenario(WORKED_TREE)
        root = scenario.space.root
        v0 = snell_backward(scenario.space, scenario.xi).v.at[root]
        classical = classical_snell_backward(scenario.space, scenario.xi)[root]
    except Exception as e:
        print(f"❌ Smoke check failed to run: {e}")
        return 1

    if abs(v0 - 5.0) > 1e-12 or abs(classical - 1.25) > 1e-12:
        print(f"❌ Smoke check: v0={v0}, classical={classical} (expected 5 and 1.25)")
        return 1
    print(f"✅ Smoke check: v0={v0:g}, classical={classical:g}")
    print()
    print("=" * 60)
    return 0


if __name__ == "__main__":
    sys.exit(check_config())
