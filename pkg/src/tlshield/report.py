"""Aggregate training metrics into plot-ready tables and figures.

Reads the per-episode metrics CSV, writes a rolling-mean table and a
per-decile summary next to it, and renders the corresponding figures
(reward curve, intervention decay, state extremes, per-decile safety and
success) as PNG files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_metrics(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"empty metrics file {path}")
    out: Dict[str, np.ndarray] = {}
    for key in rows[0]:
        out[key] = np.array([float(r[key]) for r in rows])
    return out


def rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` previous episodes (inclusive)."""
    out = np.empty_like(values, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    for i in range(len(values)):
        lo = max(0, i + 1 - window)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def decile_summary(metrics: Dict[str, np.ndarray]) -> List[Dict[str, float]]:
    n = len(metrics["episode"])
    rows = []
    for d in range(10):
        lo = n * d // 10
        hi = max(n * (d + 1) // 10, lo + 1)
        sel = slice(lo, min(hi, n))
        rows.append(
            {
                "decile": d + 1,
                "episodes": metrics["episode"][sel].size,
                "return_mean": float(np.mean(metrics["return"][sel])),
                "interventions_mean": float(np.mean(metrics["interventions"][sel])),
                "rounds_mean": float(np.mean(metrics["rounds"][sel])),
                "safety_rate": float(np.mean(metrics["safe"][sel])),
                "success_rate": float(np.mean(metrics["success"][sel])),
            }
        )
    return rows


def write_report(metrics_path, out_dir, window: int = 20) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = read_metrics(metrics_path)
    episodes = metrics["episode"]
    written: List[Path] = []

    rolling_path = out_dir / "rolling.csv"
    roll_return = rolling_mean(metrics["return"], window)
    roll_shaped = rolling_mean(metrics["shaped_return"], window)
    roll_inter = rolling_mean(metrics["interventions"], window)
    with open(rolling_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "return_rolling", "shaped_return_rolling", "interventions_rolling"])
        for i in range(len(episodes)):
            writer.writerow(
                [
                    int(episodes[i]),
                    repr(float(roll_return[i])),
                    repr(float(roll_shaped[i])),
                    repr(float(roll_inter[i])),
                ]
            )
    written.append(rolling_path)

    deciles = decile_summary(metrics)
    decile_path = out_dir / "deciles.csv"
    with open(decile_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(deciles[0]))
        writer.writeheader()
        writer.writerows(deciles)
    written.append(decile_path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(episodes, metrics["shaped_return"], alpha=0.25, label="shaped return")
    ax.plot(episodes, roll_shaped, label=f"rolling mean ({window})")
    ax.set_xlabel("episode")
    ax.set_ylabel("shaped return")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "reward_curve.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(episodes, metrics["interventions"], alpha=0.25, label="per episode")
    ax.plot(episodes, roll_inter, label=f"rolling mean ({window})")
    ax.set_xlabel("episode")
    ax.set_ylabel("filter interventions")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "interventions.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    state_cols = sorted(k for k in metrics if k.startswith("max_abs_state_"))
    fig, ax = plt.subplots(figsize=(7, 4))
    for col in state_cols:
        ax.plot(episodes, metrics[col], alpha=0.6, label=col)
    ax.set_xlabel("episode")
    ax.set_ylabel("max |state| per episode")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "state_extremes.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    xs = [d["decile"] for d in deciles]
    ax.bar([x - 0.2 for x in xs], [d["safety_rate"] for d in deciles], width=0.4, label="safety rate")
    ax.bar([x + 0.2 for x in xs], [d["success_rate"] for d in deciles], width=0.4, label="success rate")
    ax.set_xlabel("training decile")
    ax.set_ylabel("rate")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    path = out_dir / "safety.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
