# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0

import json

import pytest
from pydantic import ValidationError

from fairmatch import model


def test_online_type_arrival():
    v = model.OnlineType.model_validate_json(
        json.dumps({"id": 0, "group": "riders", "p": 0.25})
    )
    assert v.patience == 1
    assert v.p_t is None

    with pytest.raises(ValidationError, match="exactly one"):
        model.OnlineType(id=0, group="riders")
    with pytest.raises(ValidationError, match="exactly one"):
        model.OnlineType(id=0, group="riders", p=0.5, p_t=[0.5])
    with pytest.raises(ValidationError):
        model.OnlineType(id=0, group="riders", p=1.5)


def test_edge_defaults():
    e = model.Edge(u=1, v=2)
    assert e.p_e == 1.0
    assert (e.w_op, e.w_off, e.w_on) == (0.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        model.Edge(u=0, v=0, w_off=-1)
    with pytest.raises(ValidationError):
        e.p_e = 0.5


def test_weights():
    w = model.Weights(alpha=0.5, beta=0.25, gamma=0.25)
    assert w.cumulative() == (0.5, 0.75, 1.0)
    assert model.Weights().cumulative() == (0, 0, 0)

    # Floating-point sums slightly over one are accepted
    model.Weights(alpha=0.1, beta=0.2, gamma=0.7)

    with pytest.raises(ValidationError, match="more than one"):
        model.Weights(alpha=0.6, beta=0.6)


def test_instance_json(pair_instance, tmp_path):
    text = pair_instance.model_dump_json()
    data = json.loads(text)
    assert data["schema_version"] == 1
    assert data["arrival_model"] == "kiid"
    assert model.Instance.model_validate_json(text) == pair_instance

    data["schema_version"] = 2
    with pytest.raises(ValidationError):
        model.Instance.model_validate(data)


def test_trace_keys():
    trace = model.RunTrace.model_validate_json(
        json.dumps(
            {
                "events": [
                    {
                        "t": 0,
                        "arrival": 0,
                        "solution": "operator",
                        "probes": [{"edge": 1, "success": True}],
                    }
                ],
                "realized_op_utility": 2.0,
                "realized_off_utility": {"0": 0.0, "1": 1.0},
                "realized_on_utility": {"0": 1.0},
            }
        )
    )
    assert trace.realized_off_utility == {0: 0.0, 1: 1.0}
    assert trace.events[0].solution is model.Objective.operator
    assert trace.clamped == 0


def test_violation_str():
    v = model.Violation(field="edges[3]", rule="duplicate edge")
    assert str(v) == "edges[3]: duplicate edge"
    v = model.Violation(field="online", rule="bad mass", detail="round 1")
    assert str(v) == "online: bad mass (round 1)"
