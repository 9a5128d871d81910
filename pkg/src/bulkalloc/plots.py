"""Figure families drawn from result rows (only the retrain-mean rows are plotted)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# x axis and panel key per experiment kind
_LAYOUT = {
    "d_sweep": ("D", "gamma_th"),
    "stress_sweep": ("D", "gamma_th"),
    "snr_sweep": ("snr_db", "D"),
    "qth_sweep": ("q_th", "D"),
}
_LABELS = {"D": "required resources D", "snr_db": "SNR (dB)", "q_th": "gate threshold q_th", "gamma_th": "gamma_th"}


def _f(v) -> float:
    return float(v)


def _series(rows, axis, panel_key):
    """{panel: {loss: sorted [(x, row)]}} over the mean rows."""
    out = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if str(row["retrain_index"]) != "mean":
            continue
        out[_f(row[panel_key])][row["loss"]].append((_f(row[axis]), row))
    for panel in out.values():
        for pts in panel.values():
            pts.sort(key=lambda p: p[0])
    return out


def _panels(n):
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), squeeze=False)
    return fig, axes[0]


def plot_results(experiment: str, rows: list[dict], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    axis, panel_key = _LAYOUT[experiment]
    data = _series(rows, axis, panel_key)
    if not data:
        return []
    panels = sorted(data)
    paths = []

    for metric, ylabel in (("gfp", "GFP"), ("bop", "BOP")):
        fig, axes = _panels(len(panels))
        for ax, panel in zip(axes, panels):
            oracle = None
            for loss, pts in data[panel].items():
                ax.plot([x for x, _ in pts], [_f(r[metric]) for _, r in pts], marker="o", label=loss)
                oracle = pts
            if metric == "bop" and oracle:
                ax.plot([x for x, _ in oracle], [_f(r["obop"]) for _, r in oracle], "k--", label="oracle")
            ax.set_xlabel(_LABELS[axis])
            ax.set_ylabel(ylabel)
            ax.set_title(f"{panel_key} = {panel:g}")
            ax.grid(alpha=0.3)
            ax.legend(fontsize=7)
        paths.append(_save(fig, out_dir / f"{experiment}_{metric}.png"))

    fig, axes = _panels(len(panels))
    for ax, panel in zip(axes, panels):
        for loss, pts in data[panel].items():
            ax.plot([_f(r["gfp"]) for _, r in pts], [_f(r["bop"]) for _, r in pts], marker="o", label=loss)
        ax.set_xlabel("GFP")
        ax.set_ylabel("BOP")
        ax.set_title(f"{panel_key} = {panel:g}")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
    paths.append(_save(fig, out_dir / f"{experiment}_frontier.png"))

    if experiment == "qth_sweep":
        fig, axes = _panels(len(panels))
        for ax, panel in zip(axes, panels):
            for loss, pts in data[panel].items():
                ax.plot([x for x, _ in pts], [_f(r["anar"]) for _, r in pts], marker="o", label=loss)
            ax.set_xlabel(_LABELS[axis])
            ax.set_ylabel("ANAR")
            ax.set_title(f"{panel_key} = {panel:g}")
            ax.grid(alpha=0.3)
            ax.legend(fontsize=7)
        paths.append(_save(fig, out_dir / f"{experiment}_anar.png"))
    return paths


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
