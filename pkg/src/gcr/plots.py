"""Optional static figures for benchmark reports (needs matplotlib)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def bench_plots(report, out: Path) -> list[Path]:
    """Cumulative-payoff histograms, per-period payoff summaries and wealth paths as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "gcr"
    meta = {"Date": None}
    written = []
    out.mkdir(parents=True, exist_ok=True)
    for z in report.zetas:
        cells = [report.cell(p, z) for p in sorted({k[0] for k in report.cells})]
        cells = [c for c in cells if c.cumulative is not None]
        fig, ax = plt.subplots(figsize=(7, 4))
        for c in cells:
            ax.hist(c.cumulative, bins=20, alpha=0.5, label=c.policy)
        ax.set_xlabel("cumulative payoff")
        ax.set_ylabel("count")
        ax.set_title(f"zeta = {z:g}")
        ax.legend()
        written.append(_save(fig, out / f"cumulative_zeta{z:g}.svg", meta))

        fig, axes = plt.subplots(len(cells), 1, figsize=(7, 2 * max(len(cells), 1)), sharex=True,
                                 squeeze=False)
        for ax, c in zip(axes[:, 0], cells):
            ax.boxplot(c.payoffs, positions=np.arange(c.payoffs.shape[1]))
            ax.set_ylabel(c.policy)
        axes[-1, 0].set_xlabel("period")
        written.append(_save(fig, out / f"period_payoffs_zeta{z:g}.svg", meta))

        fig, ax = plt.subplots(figsize=(7, 4))
        for i, c in enumerate(cells):
            col = f"C{i}"
            for k, path in enumerate(c.wealth):
                ax.plot(path, color=col, alpha=0.3, label=c.policy if k == 0 else None)
        ax.set_xlabel("period")
        ax.set_ylabel("wealth")
        ax.legend()
        written.append(_save(fig, out / f"wealth_zeta{z:g}.svg", meta))
    return written


def _save(fig, path: Path, meta) -> Path:
    import matplotlib.pyplot as plt

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)
    return path
