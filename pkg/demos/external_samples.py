"""Analysing samples from an external model.

An expensive model was run 200 times; each row holds 14 inputs and the
utility of two alternatives.  The command-line tool reads such a file and
writes report.json and report.txt.  Here we build a synthetic file of the
same shape and run the analysis through the CLI entry point.

Only x1 and x4 drive the utilities.  With 200 runs the two alternatives are
close, so decision-change probabilities are high for every factor, and
values within about three standard errors of zero are smoothing noise.
"""

import csv
import os
import tempfile

import numpy as np

from infovalue.cli import main

rng = np.random.default_rng(1)
x = rng.normal(size=(200, 14))
u_keep = -3.0 * np.maximum(x[:, 0] + 0.5 * x[:, 3], 0) + rng.normal(0, 0.3, 200)
u_raise = np.full(200, -1.2) + 0.1 * x[:, 5]

work = tempfile.mkdtemp()
path = os.path.join(work, "samples.csv")
with open(path, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow([f"x{i + 1}" for i in range(14)] + ["u_a1", "u_a2"])
    w.writerows(np.column_stack([x, u_keep, u_raise]).tolist())

code = main(["ingest-run", "--samples", path, "--out", work])
print(f"exit code {code}\n")
with open(os.path.join(work, "report.txt")) as fh:
    print(fh.read())
