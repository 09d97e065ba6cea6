"""
A complete experiment from a config file
========================================

An experiment generates data, builds a vocabulary, trains, decodes and
writes a report directory.  The same run is available from the shell as
``lsd train --config demo.txt --out runs/demo``.
"""

import tempfile
from pathlib import Path

from lsd import parse_config, run_experiment

text = """
task = demo
mode = lsd
steps = 120
eval_every = 40
data_n_train = 120
data_n_dev = 20
data_n_test = 20
enc_hidden = 16
dec_hidden = 32
att_hidden = 16
out_hidden = 32
weight_noise_std = 0
"""
cfg = parse_config(text)

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "demo"
    res = run_experiment(cfg, out)
    print(sorted(p.name for p in out.iterdir()))
    print((out / "metrics.csv").read_text())
    print((out / "coverage.csv").read_text())
    print((out / "nbest.txt").read_text()[:400])
