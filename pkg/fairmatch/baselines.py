# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Greedy comparison policies.

Ties are broken by ascending edge index, and among equally served offline
groups by their position in ``Instance.groups``.
"""

import numpy as np

from .algorithms import OnlinePolicy, ProbeOutcome, probe_sequence
from .instance import offline_groups
from .model import Instance, RunTrace

__all__ = [
    "GreedyD",
    "GreedyO",
    "GreedyR",
    "greedy_d",
    "greedy_o",
    "greedy_r",
]


class _StaticGreedy(OnlinePolicy):
    """Probe each arrival's edges in a fixed descending-value order."""

    attr: str

    def __init__(self, inst: Instance):
        super().__init__(inst)
        self.order = [
            sorted(
                edges,
                key=lambda e: (
                    -inst.edges[e].p_e * getattr(inst.edges[e], self.attr),
                    e,
                ),
            )
            for edges in self.by_online
        ]

    def serve(self, t, v, state, rng):
        patience = self.inst.online[v].patience
        return None, probe_sequence(
            self.inst, state, self.order[v], patience, rng
        )


class GreedyO(_StaticGreedy):
    """Maximize expected operator utility of each probe."""

    attr = "w_op"


class GreedyR(_StaticGreedy):
    """Maximize expected rider (online) utility of each probe."""

    attr = "w_on"


class GreedyD(OnlinePolicy):
    """Serve the offline group with the lowest average utility so far.

    The arrival probes its available neighbors in the worst-off group by
    descending offline utility. Only when that group has no available
    neighbor does it move on to the next-worst group.
    """

    def __init__(self, inst: Instance):
        super().__init__(inst)
        groups = offline_groups(inst)
        self.group_names = list(groups)
        self.group_size = np.array([len(m) for m in groups.values()])
        self.group_of = {u: j for j, m in enumerate(groups.values()) for u in m}
        self.accumulated = np.zeros(len(groups))
        # Per arrival type and group: neighbors by descending w_off
        self.order = [
            [
                sorted(
                    (e for e in edges if self.group_of[inst.edges[e].u] == j),
                    key=lambda e: (-inst.edges[e].w_off, e),
                )
                for j in range(len(groups))
            ]
            for edges in self.by_online
        ]

    def start(self):
        super().start()
        self.accumulated[:] = 0

    def group_order(self) -> list[int]:
        average = self.accumulated / self.group_size
        return sorted(range(len(average)), key=lambda j: (average[j], j))

    def serve(self, t, v, state, rng):
        candidates = []
        for j in self.group_order():
            candidates = [
                e
                for e in self.order[v][j]
                if state.available(self.inst.edges[e].u)
            ]
            if candidates:
                break
        patience = self.inst.online[v].patience
        return None, probe_sequence(
            self.inst, state, candidates, patience, rng
        )

    def observe(self, t, v, outcome: ProbeOutcome):
        if outcome.matched_edge is not None:
            e = self.inst.edges[outcome.matched_edge]
            self.accumulated[self.group_of[e.u]] += e.w_off


def greedy_o(inst: Instance, rng: np.random.Generator) -> RunTrace:
    return GreedyO(inst).run(rng)


def greedy_r(inst: Instance, rng: np.random.Generator) -> RunTrace:
    return GreedyR(inst).run(rng)


def greedy_d(inst: Instance, rng: np.random.Generator) -> RunTrace:
    return GreedyD(inst).run(rng)
