"""
Command-line pipeline
=====================

Run the four subcommands on the shipped configurations into a scratch
directory: invariants, decay, enlargement, a refused request and the merged
report. Equivalent shell commands are shown before each step.
"""

import json
import tempfile
from pathlib import Path

from magfp.cli import main

configs = Path(__file__).resolve().parent / "configs"
root = Path(tempfile.mkdtemp(prefix="magfp-runs-"))
small = ["--set", "grid.n_x=9", "--set", "grid.n_v=12"]


def run(*args):
    print("$ magfp " + " ".join(str(a) for a in args))
    code = main([str(a) for a in args])
    print(f"exit code {code}\n")
    return code


run("verify", "--config", configs / "desk_verify.cfg", "--out", root / "verify", *small, "--set", "run.n_trials=10")
run("decay", "--config", configs / "desk_decay.cfg", "--out", root / "decay", *small, "--set", "weight.k=4")
# the smoothing slope needs the full desk resolution (about a minute)
run("enlarge", "--config", configs / "desk_enlarge.cfg", "--out", root / "enlarge")
# the W1p(m) suite needs a heavier weight than <v>^4: refused with exit code 2
run("decay", "--config", configs / "gate_refusal.cfg", "--out", root / "refused")
run("report", root)

summary = json.loads((root / "summary.json").read_text())
print((root / "decay_table.csv").read_text())
print("incomplete:", summary["incomplete"])
