"""Static SVG charts for descent curves. Output is byte-stable for fixed input."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import DescentCurve  # noqa: E402
from .fileio import atomic_write_text  # noqa: E402

_RC = {"svg.hashsalt": "minnorm", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path) -> None:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    atomic_write_text(Path(path), buf.getvalue())


def plot_descent(curve: DescentCurve, path, threshold: int | None = None, title: str = "",
                 in_label: str = "in-sample", out_label: str = "out-of-sample", log_y: bool = False) -> None:
    """RMSE against complexity, with a dashed line at ``threshold`` if given."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        x = np.asarray(curve.complexity)
        if np.any(np.isfinite(curve.out_rmse)):
            ax.plot(x, curve.out_rmse, color="tab:blue", label=out_label)
        ax.plot(x, curve.in_rmse, color="tab:orange", label=in_label)
        if threshold is not None:
            ax.axvline(threshold, color="0.3", linestyle="--", linewidth=1)
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel("complexity")
        ax.set_ylabel("RMSE")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_norm(curve: DescentCurve, path, threshold: int | None = None) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(curve.complexity, curve.coef_norm, color="tab:green")
        if threshold is not None:
            ax.axvline(threshold, color="0.3", linestyle="--", linewidth=1)
        ax.set_yscale("log")
        ax.set_xlabel("complexity")
        ax.set_ylabel("coefficient norm")
        fig.tight_layout()
        _save(fig, path)
