"""SVG charts of an energy-report series, linear and log scales side by side.

The figure has two rows — energy functionals on top, dissipation rates and
identity residuals below — with a linear-axis column on the left and a
log-axis column on the right (zero samples are simply absent there).  Input
is either a JSONL series path or an in-memory report sequence.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .errors import ConfigError
from .io import read_series

ENERGY_FIELDS = ("E_n", "E_n1", "E_n2", "F2N", "GN")
RATE_FIELDS = ("D_n", "D_n2", "res_geometric", "res_perturbed", "kappa")


def plot_series(series, out_path, title: str | None = None) -> str:
    """Render the standard four-panel chart; returns the output path."""
    if isinstance(series, (str, bytes)) or hasattr(series, "__fspath__"):
        if title is None:
            title = str(series)
        reports = read_series(series)
    else:
        reports = list(series)
    if not reports:
        raise ConfigError("nothing to plot: the series is empty")
    ts = [r.t for r in reports]

    fig, axes = plt.subplots(2, 2, figsize=(11.5, 7.5), sharex=True)
    panels = (("energy functionals", ENERGY_FIELDS),
              ("dissipation and residuals", RATE_FIELDS))
    for row, (label, names) in enumerate(panels):
        for col, scale in enumerate(("linear", "log")):
            ax = axes[row][col]
            for name in names:
                ax.plot(ts, [getattr(r, name) for r in reports],
                        label=name, linewidth=1.2)
            if scale == "log":
                ax.set_yscale("log", nonpositive="mask")
            ax.set_title(f"{label} ({scale})", fontsize=10)
            ax.grid(True, alpha=0.3)
            if row == 1:
                ax.set_xlabel("t")
            if col == 0:
                ax.legend(fontsize=8, loc="best")
    if title:
        fig.suptitle(title, fontsize=11)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return str(out_path)
