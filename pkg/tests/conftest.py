import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def write_wadi_like(path, n_rows=40, seed=0):
    """Row/Date/Time + 127 sensor columns (4 empty) + a +1/-1 attack label."""
    rng = np.random.default_rng(seed)
    names = [f"{i // 40 + 1}_AIT_{i:03d}_PV" for i in range(127)]
    empty = {5, 50, 51, 100}
    labels = np.where(rng.random(n_rows) < 0.2, -1, 1)
    lines = ["Row,Date,Time," + ",".join(names) + ",Attack LABLE (1:No Attack -1:Attack)"]
    for r in range(n_rows):
        vals = ["" if i in empty else f"{rng.normal():.5f}" for i in range(127)]
        lines.append(f"{r + 1},10/9/2017,6:{r % 60:02d}:00 PM," + ",".join(vals) + f",{labels[r]}")
    Path(path).write_text("\n".join(lines) + "\n")
    return labels


@pytest.fixture
def wadi_csv(tmp_path):
    path = tmp_path / "wadi_like.csv"
    labels = write_wadi_like(path)
    return path, labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
