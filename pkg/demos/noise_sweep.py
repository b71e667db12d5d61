"""
Noise robustness sweep
======================

Run the command line pipeline in a scratch directory, then feed the 5 Hz
model inputs filtered at higher cutoffs and compare against the 5 Hz
reference. Reduced sizes keep it under a minute.
"""
import json
import sys
import tempfile
from pathlib import Path

from vemo.cli import main

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="vemo-"))
cfg = {
    "synth": {"train_duration_s": 40.0, "test_duration_s": 40.0},
    "train": {"epochs": 3},
    "arch": {"encoder_widths": [16, 16], "branch_widths": [8]},
    "preprocess_cutoffs": [45.0, 25.0, 15.0, 5.0],
}
(work / "cfg.json").write_text(json.dumps(cfg))
for cmd in ("generate", "preprocess", "train", "sweep"):
    code = main([cmd, "--config", str(work / "cfg.json"), "--workdir", str(work)])
    if code:
        sys.exit(code)
print("artifacts in", work)
