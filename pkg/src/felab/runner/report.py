"""Experiment reports: verdicts, provenance stamp, JSON/CSV/SVG emission.

A failed verdict never blocks emission; everything the run produced is
written so failures stay diagnosable.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import subprocess
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

__all__ = ["Verdict", "ExperimentReport", "build_stamp", "emit_report"]


@dataclass(frozen=True)
class Verdict:
    """One checked claim: `target` names what the check is aimed at."""

    name: str
    target: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "passed": self.passed,
            "details": _jsonable(self.details),
        }


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    stamp: dict
    series: Dict[str, str]
    fitted: dict
    verdicts: List[Verdict]
    wall_clock: dict
    notes: List[str] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": _jsonable(self.config),
            "stamp": self.stamp,
            "series": dict(self.series),
            "fitted": _jsonable(self.fitted),
            "verdicts": [v.to_dict() for v in self.verdicts],
            "wall_clock": _jsonable(self.wall_clock),
            "notes": list(self.notes),
            "all_passed": self.all_passed,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def build_stamp() -> dict:
    from .. import __version__

    return {
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "git": _git_hash(),
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def emit_report(report: ExperimentReport, out_dir,
                formats=("json", "csv"), plots: bool = False
                ) -> Dict[str, str]:
    """Write report.json / verdicts.csv (and SVG plots) under out_dir."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths: Dict[str, str] = {}
    if "json" in formats:
        p = out / "report.json"
        with open(p, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths["json"] = str(p)
    if "csv" in formats:
        p = out / "verdicts.csv"
        with open(p, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name", "target", "passed", "details"])
            for v in report.verdicts:
                writer.writerow([
                    v.name, v.target, v.passed,
                    json.dumps(_jsonable(v.details), sort_keys=True),
                ])
        paths["csv"] = str(p)
    if plots:
        made = _emit_plots(report, out)
        if made is None:
            report.notes.append("plots skipped: matplotlib unavailable")
        else:
            paths.update(made)
    return paths


def _emit_plots(report: ExperimentReport, out: Path) -> Optional[Dict[str, str]]:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    from ..observables import MomentSeries

    made: Dict[str, str] = {}
    for name, csv_path in report.series.items():
        if not Path(csv_path).is_file():
            continue
        series = MomentSeries.from_csv(csv_path, name=name)
        fig, ax = plt.subplots(figsize=(6, 4))
        mean, err = series.mean(), series.stderr()
        ax.plot(series.times, mean, lw=1.5, label="ensemble mean")
        if series.n_trajectories > 1:
            ax.fill_between(series.times, mean - err, mean + err, alpha=0.3,
                            label="stderr")
        ax.set_xlabel("t")
        ax.set_ylabel(name)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        p = out / f"{name}.svg"
        fig.savefig(p)
        plt.close(fig)
        made[f"plot:{name}"] = str(p)
    return made
