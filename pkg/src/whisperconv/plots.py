"""Static figures: pitch-contour overlays and 2-D embedding scatter plots.

Each figure is written together with the CSV of the plotted values.
"""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_MARKERS = {"normal": "h", "whispered": "o"}
_CYCLE = ["^", "*", "x", "s", "D", "v", "P"]


def pitch_plot(tracks, out_png, out_csv, title=None):
    """Overlay F0 contours; ``tracks`` maps label to :class:`~whisperconv.metrics.F0Track`.

    Unvoiced frames are left as gaps in the figure and written as 0 in the CSV.
    """
    labels = list(tracks)
    n = max(len(t) for t in tracks.values())
    shift = next(iter(tracks.values())).frame_shift
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + labels)
        for k in range(n):
            row = [f"{k * shift:.4f}"]
            for lab in labels:
                f0 = tracks[lab].f0
                row.append(repr(float(f0[k])) if k < f0.size else "")
            writer.writerow(row)
    fig, ax = plt.subplots(figsize=(8, 3))
    for lab in labels:
        f0 = tracks[lab].f0.copy()
        f0[f0 == 0] = np.nan
        ax.plot(np.arange(f0.size) * shift, f0, label=lab)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("F0 [Hz]")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png)
    plt.close(fig)
    return Path(out_png), Path(out_csv)


def read_pitch_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    cols = {lab: [] for lab in labels}
    for row in rows[1:]:
        for lab, v in zip(labels, row[1:]):
            if v != "":
                cols[lab].append(float(v))
    return {lab: np.asarray(v) for lab, v in cols.items()}


def projection_plot(coords, sources, out_png, out_csv, utt_ids=None):
    """Scatter 2-D points with one marker per source."""
    coords = np.asarray(coords, dtype=np.float64)
    utt_ids = utt_ids or [""] * len(sources)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "source", "utt_id"])
        for (x, y), s, u in zip(coords, sources, utt_ids):
            writer.writerow([f"{x:.6f}", f"{y:.6f}", s, u])
    fig, ax = plt.subplots(figsize=(5, 5))
    others = iter(_CYCLE)
    for src in sorted(set(sources)):
        mask = np.array([s == src for s in sources])
        marker = _MARKERS.get(src) or next(others, ".")
        ax.scatter(coords[mask, 0], coords[mask, 1], marker=marker, label=src, alpha=0.8)
    ax.legend(fontsize="small")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(out_png)
    plt.close(fig)
    return Path(out_png), Path(out_csv)


def read_projection_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    coords = np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
    return coords, [r["source"] for r in rows], [r.get("utt_id", "") for r in rows]
