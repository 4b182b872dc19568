# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Monte-Carlo estimates of the five matching objectives."""

from collections.abc import Sequence
from typing import NamedTuple

import numpy as np

from .instance import expected_arrivals, offline_groups, online_groups
from .model import Instance, RunTrace

__all__ = ["Estimate", "ObjectiveEstimate", "evaluate_objectives"]


class Estimate(NamedTuple):
    mean: float
    stderr: float


class ObjectiveEstimate(NamedTuple):
    operator: Estimate
    offline_group: Estimate
    online_group: Estimate
    offline_individual: Estimate
    online_individual: Estimate
    n_traces: int


def _stderr(samples: np.ndarray) -> float:
    if len(samples) < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / np.sqrt(len(samples)))


def _worst_column(samples: np.ndarray) -> Estimate:
    """Minimum of the column means, with the error of the argmin column.

    An empty column set (no group on that side) is estimated as zero.
    """
    if samples.shape[1] == 0:
        return Estimate(0.0, 0.0)
    means = samples.mean(axis=0)
    worst = int(np.argmin(means))
    return Estimate(float(means[worst]), _stderr(samples[:, worst]))


def per_trace_utilities(
    inst: Instance, traces: Sequence[RunTrace]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fold traces into (operator, offline-by-vertex, online-by-round) arrays.

    The arrays have shapes (N,), (N, |U|), and (N, T).
    """
    n = len(traces)
    op = np.zeros(n)
    off = np.zeros((n, len(inst.offline)))
    on = np.zeros((n, inst.horizon))
    for i, tr in enumerate(traces):
        op[i] = tr.realized_op_utility
        for u, val in tr.realized_off_utility.items():
            off[i, u] = val
        for t, val in tr.realized_on_utility.items():
            on[i, t] = val
    return op, off, on


def evaluate_objectives(
    inst: Instance, traces: Sequence[RunTrace]
) -> ObjectiveEstimate:
    """Estimate every objective from independent traces of one algorithm.

    Fairness objectives are minima over the per-group (or per-vertex, or
    per-round) sample means; each standard error is that of the minimizing
    entry.
    """
    if not traces:
        raise ValueError("cannot evaluate objectives without traces")

    op, off, on = per_trace_utilities(inst, traces)

    off_groups = offline_groups(inst)
    off_group = np.zeros((len(traces), len(off_groups)))
    for j, members in enumerate(off_groups.values()):
        off_group[:, j] = off[:, members].sum(axis=1) / len(members)

    on_groups = online_groups(inst)
    group_of_type = {}
    for g, members in on_groups.items():
        for v in members:
            group_of_type[v] = g
    names = list(on_groups)
    on_group = np.zeros((len(traces), len(names)))
    for i, tr in enumerate(traces):
        for ev in tr.events:
            g = group_of_type.get(ev.arrival)
            if g is not None:
                on_group[i, names.index(g)] += tr.realized_on_utility.get(
                    ev.t, 0.0
                )
    for j, g in enumerate(names):
        on_group[:, j] /= sum(expected_arrivals(inst, v) for v in on_groups[g])

    return ObjectiveEstimate(
        operator=Estimate(float(op.mean()), _stderr(op)),
        offline_group=_worst_column(off_group),
        online_group=_worst_column(on_group),
        offline_individual=_worst_column(off),
        online_individual=_worst_column(on),
        n_traces=len(traces),
    )
