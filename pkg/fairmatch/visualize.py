# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Plot competitive ratios of weight sweeps."""

from collections.abc import Sequence
from pathlib import Path
from typing import Any, Optional

import matplotlib.pyplot as plt
import numpy as np

from .experiment import RatioReport
from .model import Objective

__all__ = ["OBJECTIVE_LABELS", "plot_sweep", "save_sweep_plot"]

OBJECTIVE_LABELS = {
    Objective.operator: "Profit",
    Objective.offline_fair: "Offline fairness",
    Objective.online_fair: "Online fairness",
}

_WEIGHT_ATTR = {
    Objective.operator: "alpha",
    Objective.offline_fair: "beta",
    Objective.online_fair: "gamma",
}


def plot_sweep(
    reports: Sequence[RatioReport], ax=None, *, floors: bool = True
) -> dict[str, Any]:
    """Draw each objective's ratio against alpha, with error bars.

    With ``floors``, the guaranteed ratio ``w / (2e)`` of each objective's
    weight is drawn as a dashed line in the same color.
    """
    if not reports:
        raise ValueError("no reports to plot")
    if ax is None:
        (_, ax) = plt.subplots(layout="constrained")

    alphas = np.array([r.config.alpha for r in reports])
    order = np.argsort(alphas, kind="stable")
    alphas = alphas[order]
    result: dict[str, Any] = {"ax": ax}

    for obj, label in OBJECTIVE_LABELS.items():
        rows = [reports[i].get(obj) for i in order]
        ratio = np.array([np.nan if r.ratio is None else r.ratio for r in rows])
        err = np.array([r.ratio_stderr or 0.0 for r in rows])
        bars = ax.errorbar(alphas, ratio, yerr=err, marker="o", label=label)
        result[obj.value] = bars
        if floors:
            weights = np.array(
                [getattr(reports[i].config, _WEIGHT_ATTR[obj]) for i in order]
            )
            (line,) = ax.plot(
                alphas,
                weights / (2 * np.e),
                linestyle="--",
                color=bars.lines[0].get_color(),
            )
            result[f"{obj.value}_floor"] = line

    ax.set_xlabel(r"$\alpha$ (with $\beta = \gamma = (1 - \alpha)/2$)")
    ax.set_ylabel("Competitive ratio")
    ax.set_ylim(bottom=0)
    title = _title(reports)
    if title:
        ax.set_title(title)
    ax.legend()
    return result


def save_sweep_plot(
    reports: Sequence[RatioReport], path: Path, *, figsize=None
) -> Path:
    (fig, ax) = plt.subplots(layout="constrained", figsize=figsize)
    try:
        plot_sweep(reports, ax)
        fig.savefig(path)
    finally:
        plt.close(fig)
    return Path(path)


def _title(reports: Sequence[RatioReport]) -> Optional[str]:
    trials = {r.trials for r in reports}
    if len(trials) == 1:
        return f"{trials.pop()} trials per point"
    return None
