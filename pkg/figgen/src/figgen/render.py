"""Figure rendering from experiment CSV logs.

Reads the documented joint-log schema (t, theta, theta_d, epsilon, eta, u,
S_hat, S_tilde, w0, w_nu, w_2nu, critic_fro, payload_kg) and renders
reference-vs-achieved overlays, actor-gain adaptation curves, and
controller comparison overlays.  Plotted series are the CSV columns
verbatim: no smoothing, no resampling; rendering never touches the logs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

EXPECTED_COLUMNS = ("t", "theta", "theta_d", "epsilon", "eta", "u",
                    "S_hat", "S_tilde", "w0", "w_nu", "w_2nu",
                    "critic_fro", "payload_kg")

KINDS = ("trajectory_overlay", "gain_adaptation", "controller_comparison")


class FiggenError(ValueError):
    """Missing or malformed log input."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure request.

    `log_dirs` holds one directory for trajectory/gain figures and two
    (one per controller) for a comparison overlay.
    """

    log_dirs: Tuple[Path, ...]
    kind: str
    joint: int  # 1-based, matching joint<k>.csv
    out: Path

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise FiggenError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        want = 2 if self.kind == "controller_comparison" else 1
        if len(self.log_dirs) != want:
            raise FiggenError(f"{self.kind} needs exactly {want} log dir(s), got {len(self.log_dirs)}")
        if self.joint < 1:
            raise FiggenError("joint selection is 1-based")


def load_joint_log(log_dir: Path, joint: int) -> Dict[str, np.ndarray]:
    path = Path(log_dir) / f"joint{joint}.csv"
    if not path.exists():
        raise FiggenError(f"missing log file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != EXPECTED_COLUMNS:
            raise FiggenError(
                f"{path}: unexpected columns {header!r}; expected {EXPECTED_COLUMNS!r}")
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise FiggenError(f"{path}: no data rows")
    arr = np.asarray(rows)
    return {name: arr[:, i] for i, name in enumerate(EXPECTED_COLUMNS)}


def _controller_label(log_dir: Path) -> str:
    path = Path(log_dir) / "metrics.csv"
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            row = next(reader, None)
            if row and row.get("controller"):
                return row["controller"]
    except OSError:
        pass
    return Path(log_dir).name


def render(spec: FigureSpec) -> plt.Figure:
    """Render the figure, write it to spec.out, and return it (lines carry
    the exact CSV series, which the tests check)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=150)
    if spec.kind == "trajectory_overlay":
        log = load_joint_log(spec.log_dirs[0], spec.joint)
        ax.plot(log["t"], log["theta_d"], "k--", label="reference")
        ax.plot(log["t"], log["theta"], label="achieved")
        ax.set_ylabel("angle (rad)")
        ax.set_title(f"joint {spec.joint} trajectory")
    elif spec.kind == "gain_adaptation":
        log = load_joint_log(spec.log_dirs[0], spec.joint)
        for col, label in (("w0", "w0"), ("w_nu", "w_nu"), ("w_2nu", "w_2nu")):
            ax.plot(log["t"], log[col], label=label)
        ax.set_ylabel("actor gain")
        ax.set_title(f"joint {spec.joint} gain adaptation")
    else:
        first = load_joint_log(spec.log_dirs[0], spec.joint)
        second = load_joint_log(spec.log_dirs[1], spec.joint)
        ax.plot(first["t"], first["theta_d"], "k--", label="reference")
        ax.plot(first["t"], first["theta"], label=_controller_label(spec.log_dirs[0]))
        ax.plot(second["t"], second["theta"], label=_controller_label(spec.log_dirs[1]))
        ax.set_ylabel("angle (rad)")
        ax.set_title(f"joint {spec.joint} controller comparison")
    ax.set_xlabel("time (s)")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    return fig
