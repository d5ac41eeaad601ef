"""Learning-curve plots: per-config mean across seeds with 95% confidence bands."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

CURVE_HEADER = ["step", "mean_return", "std_return", "wall_seconds"]


def read_curve(path) -> np.ndarray:
    """(k, 4) array of the curve rows."""
    path = Path(path)
    with path.open() as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != CURVE_HEADER:
            raise ValueError(f"{path}: unexpected CSV schema {header}")
        rows = [[float(x) for x in row] for row in reader]
    return np.array(rows).reshape(-1, 4)


def band_halfwidth(per_seed_means: np.ndarray) -> np.ndarray:
    """95% confidence half-width across seeds at each evaluation step."""
    k = per_seed_means.shape[0]
    return 1.96 * per_seed_means.std(axis=0, ddof=1) / np.sqrt(k)


def _label_for(path: Path) -> str:
    cfg = path.parent / "config.json"
    if cfg.exists():
        doc = json.loads(cfg.read_text())
        return (f"{doc.get('task', '?')}/{doc.get('repr_kind', '?')}"
                f"/{doc.get('aug_kind', 'none')}@{doc.get('rho_aug', 0)}")
    return path.stem


def plot_curves(csv_paths, out_path) -> None:
    """Write a static SVG/PDF/PNG chart grouping seeds by resolved config."""
    if not csv_paths:
        raise ValueError("no curve files given")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups: dict[str, list[np.ndarray]] = defaultdict(list)
    for p in csv_paths:
        p = Path(p)
        groups[_label_for(p)].append(read_curve(p))

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for label, curves in sorted(groups.items()):
        steps = curves[0][:, 0]
        k = min(c.shape[0] for c in curves)
        steps = steps[:k]
        means = np.stack([c[:k, 1] for c in curves])
        mean = means.mean(axis=0)
        (line,) = ax.plot(steps, mean, label=f"{label} (n={len(curves)})")
        if len(curves) > 1:
            half = band_halfwidth(means)
            ax.fill_between(steps, mean - half, mean + half,
                            alpha=0.25, color=line.get_color(), linewidth=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("episode return")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
