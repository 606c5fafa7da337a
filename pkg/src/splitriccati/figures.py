"""Render convergence figures from a sweep's error table.

One log-log panel per scheme: error against step size, a curve per spatial
resolution, with dashed order guides. Files land next to the delimited
output so a report directory is self-contained.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be fixed first)

from .experiments import ErrorTable, ExperimentConfig

__all__ = ["render_error_figures"]

_GUIDE_ORDER = {"lie": 1, "strang": 2}


def render_error_figures(table: ErrorTable, config: ExperimentConfig, out_dir, stem: str):
    """Write <stem>_lie.png and <stem>_strang.png into out_dir; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for scheme in ("lie", "strang"):
        fig, ax = plt.subplots(figsize=(7, 5))
        guide_anchor = None
        for nh in config.nh_list:
            rows = table.rows_for(scheme, nh)
            taus = np.array([r.tau for r in rows])
            errs = np.array([r.err for r in rows])
            ok = np.isfinite(errs) & (errs > 0)
            if not np.any(ok):
                continue
            ax.loglog(taus[ok], errs[ok], "o-", label=f"$N_h = {nh}$")
            if guide_anchor is None:
                guide_anchor = (taus[ok][0], errs[ok][0])
        if guide_anchor is not None:
            order = _GUIDE_ORDER[scheme]
            taus = np.array([config.tau(nt) for nt in config.nt_list])
            c = 2.0 * guide_anchor[1] / guide_anchor[0] ** order
            ax.loglog(taus, c * taus ** order, "--", color="gray",
                      label=f"order {order}")
        ax.set_xlabel(r"$\tau$")
        ax.set_ylabel("max-in-time weighted error")
        ax.set_title(f"Experiment {config.experiment_id}, {scheme} splitting")
        ax.grid(True, which="both", alpha=0.4)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{stem}_{scheme}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
