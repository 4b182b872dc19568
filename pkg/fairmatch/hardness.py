# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Small instances on which no online algorithm does well everywhere."""

from typing import Literal

import numpy as np

from .model import (
    ArrivalModel,
    Edge,
    Instance,
    InstanceError,
    OfflineVertex,
    OnlineType,
)

__all__ = [
    "HARDNESS_OFFLINE_UTILITY",
    "HARDNESS_ONLINE_UTILITY",
    "HARDNESS_OPERATOR_UTILITY",
    "make_hardness_group_instance",
    "make_hardness_indiv_group_instance",
]

HARDNESS_OPERATOR_UTILITY = np.eye(3)
HARDNESS_OFFLINE_UTILITY = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]])
HARDNESS_ONLINE_UTILITY = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])


def make_hardness_group_instance(horizon: int = 9) -> Instance:
    """Complete 3x3 graph where each edge serves only one party.

    Rows index offline vertices and columns online types. Online utilities are
    scaled by the expected arrival count T/3 so that the benchmarks are
    (3, 1, 1) for every horizon.
    """
    if horizon < 3 or horizon % 3:
        raise InstanceError(f"horizon must be a multiple of 3: {horizon}")
    scale = horizon / 3
    edges = [
        Edge(
            u=i,
            v=j,
            p_e=1.0,
            w_op=float(HARDNESS_OPERATOR_UTILITY[i, j]),
            w_off=float(HARDNESS_OFFLINE_UTILITY[i, j]),
            w_on=float(HARDNESS_ONLINE_UTILITY[i, j] * scale),
        )
        for i in range(3)
        for j in range(3)
    ]
    return Instance(
        horizon=horizon,
        arrival_model=ArrivalModel.kiid,
        offline=[OfflineVertex(id=i, group=f"u{i + 1}") for i in range(3)],
        online=[
            OnlineType(id=j, group=f"v{j + 1}", p=1 / 3) for j in range(3)
        ],
        edges=edges,
        groups=[f"u{i + 1}" for i in range(3)]
        + [f"v{j + 1}" for j in range(3)],
        metadata={"fixture": "hardness-group", "online_scale": scale},
    )


def make_hardness_indiv_group_instance(
    L: float, side: Literal["offline", "online"] = "offline"
) -> Instance:
    """Two-edge instance where group and individual fairness conflict.

    On the offline side, two offline vertices in one group compete for a
    single arrival; the edge to the second vertex is worth ``L`` to it and
    the other is worth one. The online variant mirrors this with one offline
    vertex and two types, each certain to arrive in its own round.
    """
    if not L > 0:
        raise InstanceError(f"L must be positive: {L}")

    if side == "offline":
        return Instance(
            horizon=1,
            arrival_model=ArrivalModel.kiid,
            offline=[
                OfflineVertex(id=0, group="g"),
                OfflineVertex(id=1, group="g"),
            ],
            online=[OnlineType(id=0, group="h", p=1.0)],
            edges=[
                Edge(u=0, v=0, w_op=1.0, w_off=1.0, w_on=1.0),
                Edge(u=1, v=0, w_op=1.0, w_off=float(L), w_on=1.0),
            ],
            groups=["g", "h"],
            metadata={"fixture": "hardness-indiv-offline", "L": float(L)},
        )
    if side == "online":
        return Instance(
            horizon=2,
            arrival_model=ArrivalModel.kad,
            offline=[OfflineVertex(id=0, group="h")],
            online=[
                OnlineType(id=0, group="g", p_t=[1.0, 0.0]),
                OnlineType(id=1, group="g", p_t=[0.0, 1.0]),
            ],
            edges=[
                Edge(u=0, v=0, w_op=1.0, w_off=1.0, w_on=1.0),
                Edge(u=0, v=1, w_op=1.0, w_off=1.0, w_on=float(L)),
            ],
            groups=["g", "h"],
            metadata={"fixture": "hardness-indiv-online", "L": float(L)},
        )
    raise ValueError(f"unknown side {side!r}")
