# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fairmatch import lp
from fairmatch.algorithms import reduce_individual_to_group
from fairmatch.hardness import (
    make_hardness_group_instance,
    make_hardness_indiv_group_instance,
)
from fairmatch.instance import fragment_types, validate_instance
from fairmatch.model import (
    ArrivalModel,
    Edge,
    Instance,
    InstanceError,
    Objective,
    OfflineVertex,
    OnlineType,
)


def test_kiid_rows(pair_instance):
    prog = lp.build_kiid_lp(pair_instance, Objective.operator)
    assert prog.x_shape == (2,)
    assert prog.eta is None
    assert prog.row_names == [
        "offline_match[0]",
        "offline_patience[0]",
        "offline_match[1]",
        "offline_patience[1]",
        "online_match[0]",
        "online_patience[0]",
    ]
    assert_allclose(prog.objective, [1.0, 2.0])

    prog = lp.build_kiid_lp(pair_instance, Objective.offline_fair)
    assert prog.eta == 2
    assert prog.variables[-1] == "eta"
    assert prog.row_names[-2:] == ["fair[a]", "fair[b]"]


def test_kiid_benchmarks(pair_instance):
    bundle = lp.benchmarks(pair_instance)
    assert bundle.arrival_model is ArrivalModel.kiid
    assert bundle.opt_op == pytest.approx(2.0)
    # One arrival must be split between the two single-driver groups
    assert bundle.opt_off == pytest.approx(0.5)
    assert bundle.opt_on == pytest.approx(2.0)
    assert_allclose(bundle.x_star.edge_values(), [0, 1], atol=1e-9)
    assert_allclose(bundle.y_star.edge_values(), [0.5, 0.5], atol=1e-9)

    result = bundle.to_dict(primal=True)
    assert set(result) == {
        "opt_op",
        "opt_off",
        "opt_on",
        "x_star",
        "y_star",
        "z_star",
    }
    assert bundle.optimum(Objective.online_fair) == bundle.opt_on


def test_kiid_requires_fragmented():
    inst = make_hardness_group_instance(9)
    with pytest.raises(InstanceError, match="fragmented"):
        lp.build_kiid_lp(inst, Objective.operator)

    # Scaling the online rows by n_v gives the fragmented optimum
    frag = lp.benchmarks(fragment_types(inst))
    for obj in Objective:
        sol = lp.solve_lp(lp.build_kiid_lp(inst, obj, fragmented_only=False))
        assert sol.objective_value == pytest.approx(frag.optimum(obj))


def test_kad_benchmarks(two_round_kad):
    bundle = lp.benchmarks(two_round_kad)
    assert bundle.arrival_model is ArrivalModel.kad
    assert bundle.x_star.edge_values().shape == (2, 2)
    assert bundle.opt_op == pytest.approx(1.0)
    assert_allclose(bundle.x_star.edge_values(), [[1, 0], [0, 0]], atol=1e-9)
    assert bundle.opt_off == pytest.approx(1.0)
    # Both types share one group with two expected arrivals
    assert bundle.opt_on == pytest.approx(0.5)

    with pytest.raises(InstanceError, match="KIID"):
        lp.build_kiid_lp(two_round_kad, Objective.operator)


def test_kad_requires_unit_success(two_round_kad):
    noisy = two_round_kad.model_copy(
        update={
            "edges": [two_round_kad.edges[0].model_copy(update={"p_e": 0.5})]
        }
    )
    with pytest.raises(InstanceError, match="p_e = 1"):
        lp.build_kad_lp(noisy, Objective.operator)


def test_check_solution(pair_instance):
    prog = lp.build_kiid_lp(pair_instance, Objective.operator)
    assert lp.check_solution(prog, [0.5, 0.5]) == []
    assert lp.check_solution(prog, [1.0, 1.0]) == [
        "row online_match[0] exceeded by 1",
        "row online_patience[0] exceeded by 1",
    ]
    assert lp.check_solution(prog, [-0.1, 0.0]) == ["bound x[0]=-0.1"]


def test_group_values(pair_instance):
    bundle = lp.benchmarks(pair_instance)
    values = lp.group_values(pair_instance, bundle.y_star, "offline")
    assert values == pytest.approx({"a": 0.5, "b": 0.5})
    values = lp.group_values(pair_instance, bundle.z_star, "online")
    assert values == pytest.approx({"c": 2.0})


def test_shared_group_name(pair_instance):
    riderless = pair_instance.model_copy(
        update={
            "online": [OnlineType(id=0, group="a", p=1.0)],
            "groups": ["a", "b"],
        }
    )
    assert lp.benchmarks(riderless).opt_on == pytest.approx(2.0)


def random_kad_instance(rng: np.random.Generator) -> Instance:
    n_u, n_v, T = (int(n) for n in rng.integers(1, 4, size=3))
    p = rng.dirichlet(np.ones(n_v), size=T).T
    edges = [
        Edge(
            u=u,
            v=v,
            w_op=float(rng.uniform()),
            w_off=float(rng.uniform()),
            w_on=float(rng.uniform()),
        )
        for u in range(n_u)
        for v in range(n_v)
        if rng.random() < 0.7
    ]
    return Instance(
        horizon=T,
        arrival_model=ArrivalModel.kad,
        offline=[OfflineVertex(id=u, group="g") for u in range(n_u)],
        online=[
            OnlineType(id=v, group="g", p_t=p[v].tolist())
            for v in range(n_v)
        ],
        edges=edges,
        groups=["g"],
    )


def test_individual_reduction():
    rng = np.random.default_rng(20240611)
    for _ in range(20):
        inst = random_kad_instance(rng)
        assert validate_instance(inst) == []
        reduced = reduce_individual_to_group(inst)
        assert validate_instance(reduced) == []

        direct = lp.individual_benchmarks(inst)
        grouped = lp.benchmarks(reduced)
        assert grouped.opt_off == pytest.approx(direct.opt_off, abs=1e-6)
        assert grouped.opt_on == pytest.approx(direct.opt_on, abs=1e-6)
        assert grouped.opt_op == pytest.approx(direct.opt_op, abs=1e-6)


def test_individual_lp_side(two_round_kad):
    with pytest.raises(ValueError, match="side"):
        lp.build_individual_lp(two_round_kad, "both")
    prog = lp.build_individual_lp(two_round_kad, "online")
    assert prog.row_names[-2:] == ["individual[round 0]", "individual[round 1]"]


def assert_reduction_matches(inst: Instance):
    reduced = reduce_individual_to_group(inst)
    assert reduced.arrival_model is ArrivalModel.kad
    assert validate_instance(reduced) == []
    direct = lp.individual_benchmarks(inst)
    grouped = lp.benchmarks(reduced)
    assert grouped.opt_op == pytest.approx(direct.opt_op, abs=1e-6)
    assert grouped.opt_off == pytest.approx(direct.opt_off, abs=1e-6)
    assert grouped.opt_on == pytest.approx(direct.opt_on, abs=1e-6)
    return grouped


def test_individual_reduction_kiid(pair_factory):
    rng = np.random.default_rng(7)
    for _ in range(10):
        T = int(rng.integers(1, 4))
        p = rng.dirichlet(np.ones(2))
        edges = [
            Edge(
                u=u,
                v=v,
                w_op=float(rng.uniform()),
                w_off=float(rng.uniform()),
                w_on=float(rng.uniform()),
            )
            for u in range(2)
            for v in range(2)
        ]
        inst = Instance(
            horizon=T,
            arrival_model=ArrivalModel.kiid,
            offline=[OfflineVertex(id=u, group="g") for u in range(2)],
            online=[
                OnlineType(id=v, group="h", p=float(p[v])) for v in range(2)
            ],
            edges=edges,
            groups=["g", "h"],
        )
        assert_reduction_matches(inst)

    # One vertex on each side: nothing changes but the labels
    single = pair_factory().model_copy(
        update={
            "offline": [OfflineVertex(id=0, group="a")],
            "edges": pair_factory().edges[:1],
        }
    )
    grouped = assert_reduction_matches(single)
    assert grouped.opt_op == pytest.approx(lp.benchmarks(single).opt_op)

    L = 100.0
    grouped = assert_reduction_matches(
        make_hardness_indiv_group_instance(L, "offline")
    )
    assert grouped.opt_off == pytest.approx(L / (L + 1), abs=1e-6)
