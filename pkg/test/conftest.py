# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0

import pytest

from fairmatch.model import (
    ArrivalModel,
    Edge,
    Instance,
    OfflineVertex,
    OnlineType,
)


def make_pair_instance(**edge_updates) -> Instance:
    """Two drivers in separate groups and one certain rider type, T=1."""
    edges = [
        Edge(u=0, v=0, w_op=1.0, w_off=1.0, w_on=2.0),
        Edge(u=1, v=0, w_op=2.0, w_off=1.0, w_on=1.0),
    ]
    edges = [e.model_copy(update=edge_updates) for e in edges]
    return Instance(
        horizon=1,
        arrival_model=ArrivalModel.kiid,
        offline=[
            OfflineVertex(id=0, group="a"),
            OfflineVertex(id=1, group="b"),
        ],
        online=[OnlineType(id=0, group="c", p=1.0)],
        edges=edges,
        groups=["a", "b", "c"],
    )


def make_two_round_kad() -> Instance:
    """One offline vertex that only the first-round arrival should take."""
    return Instance(
        horizon=2,
        arrival_model=ArrivalModel.kad,
        offline=[OfflineVertex(id=0, group="a")],
        online=[
            OnlineType(id=0, group="b", p_t=[1.0, 0.0]),
            OnlineType(id=1, group="b", p_t=[0.0, 1.0]),
        ],
        edges=[
            Edge(u=0, v=0, w_op=1.0, w_off=1.0, w_on=1.0),
            Edge(u=0, v=1, w_op=0.5, w_off=1.0, w_on=1.0),
        ],
        groups=["a", "b"],
    )


@pytest.fixture
def pair_instance():
    return make_pair_instance()


@pytest.fixture
def two_round_kad():
    return make_two_round_kad()


@pytest.fixture
def pair_factory():
    return make_pair_instance
