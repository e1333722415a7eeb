"""
Figures from sweep and trajectory CSVs.

Imported lazily by the `plot` subcommand; nothing else in lipsol depends on
matplotlib.
"""

import logging
import re
from typing import List, Optional

import matplotlib

matplotlib.use("Agg")  # Non-interactive backend, files only
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import UsageError  # noqa: E402

logger = logging.getLogger(__name__)

_U_COLUMN = re.compile(r"^(?P<method>.+)_u_(?P<index>\d+)$")


def sweep_methods(frame: pd.DataFrame) -> List[str]:
    """Method labels present in a sweep table, in column order"""
    seen = []
    for column in frame.columns:
        match = _U_COLUMN.match(column)
        if match and match.group("method") not in seen:
            seen.append(match.group("method"))
    return seen


def _u_columns(frame: pd.DataFrame, method: str) -> List[str]:
    return [c for c in frame.columns if c.startswith(f"{method}_u_")]


def plot_sweep(frame: pd.DataFrame, filename: str, methods: Optional[List[str]] = None) -> str:
    """
    Solution curves of a sweep.

    One parameter: every u component against x_1, one panel per component.
    Two parameters: |u| as a color map over (x_1, x_2), one panel per method.
    Only the finest refinement level is drawn.
    """
    methods = methods or sweep_methods(frame)
    missing = [m for m in methods if not _u_columns(frame, m)]
    if not methods or missing:
        raise UsageError(f"sweep file has no columns for methods: {', '.join(missing or ['any'])}")
    if "level" in frame.columns:
        frame = frame[frame["level"] == frame["level"].max()]
    x_columns = [c for c in frame.columns if re.fullmatch(r"x_\d+", c)]

    plt.style.use("default")
    if len(x_columns) == 1:
        components = len(_u_columns(frame, methods[0]))
        fig, axes = plt.subplots(components, 1, figsize=(10, 3.5 * components), squeeze=False)
        for j in range(components):
            ax = axes[j, 0]
            for method in methods:
                ax.plot(frame["x_1"], frame[f"{method}_u_{j + 1}"], label=method, linewidth=1.5)
            ax.set_ylabel(f"u_{j + 1}")
            ax.grid(True, linestyle="--", alpha=0.7)
            ax.legend()
        axes[-1, 0].set_xlabel("x_1")
    elif len(x_columns) == 2:
        fig, axes = plt.subplots(1, len(methods), figsize=(6 * len(methods), 5), squeeze=False)
        for ax, method in zip(axes[0], methods):
            norms = np.linalg.norm(frame[_u_columns(frame, method)].to_numpy(), axis=1)
            table = frame.assign(norm=norms).pivot_table(index="x_2", columns="x_1", values="norm")
            mesh = ax.pcolormesh(table.columns, table.index, table.to_numpy(), shading="auto", cmap="viridis")
            fig.colorbar(mesh, ax=ax, label="|u|")
            ax.set_title(method)
            ax.set_xlabel("x_1")
            ax.set_ylabel("x_2")
    else:
        raise UsageError("sweep plots support one or two parameters")

    fig.tight_layout()
    fig.savefig(filename, dpi=150, bbox_inches="tight", facecolor="white")
    plt.close(fig)
    logger.info(f"📊 Sweep plot saved: {filename}")
    return filename


def plot_trajectory(frame: pd.DataFrame, filename: str) -> str:
    """States and inputs against time"""
    x_columns = [c for c in frame.columns if re.fullmatch(r"x_\d+", c)]
    u_columns = [c for c in frame.columns if re.fullmatch(r"u_\d+", c)]
    if "t" not in frame.columns or not x_columns:
        raise UsageError("trajectory file needs t and x_i columns")

    fig, (ax_x, ax_u) = plt.subplots(2, 1, figsize=(10, 7), sharex=True)
    for column in x_columns:
        ax_x.plot(frame["t"], frame[column], label=column, linewidth=1.5)
    for column in u_columns:
        ax_u.step(frame["t"], frame[column], where="post", label=column, linewidth=1.2)
    ax_x.set_ylabel("state")
    ax_u.set_ylabel("input")
    ax_u.set_xlabel("t")
    for ax in (ax_x, ax_u):
        ax.grid(True, linestyle="--", alpha=0.7)
        ax.legend()

    fig.tight_layout()
    fig.savefig(filename, dpi=150, bbox_inches="tight", facecolor="white")
    plt.close(fig)
    logger.info(f"📊 Trajectory plot saved: {filename}")
    return filename


def plot_csv(path: str, filename: str, kind: Optional[str] = None, methods: Optional[List[str]] = None) -> str:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as err:
        raise UsageError(f"cannot read {path}: {err}") from err
    kind = kind or ("trajectory" if "t" in frame.columns else "sweep")
    if kind == "trajectory":
        return plot_trajectory(frame, filename)
    return plot_sweep(frame, filename, methods)
