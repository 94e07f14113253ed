"""How the fractional order changes the motion and the action.

Runs the verify pipeline for alpha = 0.1, 0.2, ..., 1 in parallel through
the command layer and prints the resulting CSV table. Every row should
report a drift far below the 1e-5 tolerance.
"""

import sys
import tempfile
from pathlib import Path

from falva.cli import cmd_sweep

ROOT = Path(__file__).resolve().parent.parent
problem = ROOT / "problems" / "falva_m2.json"

with tempfile.TemporaryDirectory() as tmp:
    out = cmd_sweep(problem, "0.1:1.0:0.1", csv_out=Path(tmp) / "sweep.csv")
    print(out.report)
    print()
    print((Path(tmp) / "sweep.csv").read_text())

sys.exit(out.exit_code)
