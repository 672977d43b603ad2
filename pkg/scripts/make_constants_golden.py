"""Regenerate tests/data/constants_golden.txt from the Decimal oracle.

The golden file is checked in; this only needs rerunning if the oracle's
ledger changes. ``--check`` exits 1 when the file is stale.
"""
import sys
from pathlib import Path

TESTS = Path(__file__).resolve().parents[1] / "tests"
sys.path.insert(0, str(TESTS))

from oracles import golden_text  # noqa: E402

target = TESTS / "data" / "constants_golden.txt"
if "--check" in sys.argv[1:]:
    ok = target.read_text() == golden_text()
    print("up to date" if ok else f"{target} is stale")
    sys.exit(0 if ok else 1)
target.write_text(golden_text())
print(f"wrote {target}")
