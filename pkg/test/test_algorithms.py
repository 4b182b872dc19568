# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from fairmatch import algorithms
from fairmatch.hardness import make_hardness_group_instance
from fairmatch.instance import check_trace, fragment_types, to_kad
from fairmatch.lp import benchmarks
from fairmatch.model import (
    ArrivalModel,
    Edge,
    Instance,
    InstanceError,
    Objective,
    OfflineVertex,
    OnlineType,
    PreconditionError,
    Weights,
)
from fairmatch.objectives import evaluate_objectives

OPERATOR_ONLY = Weights(alpha=1.0)


def fan_instance(patience_v: int = 2, p_e: float = 1.0) -> Instance:
    """One arrival type adjacent to two drivers."""
    return Instance(
        horizon=1,
        arrival_model=ArrivalModel.kiid,
        offline=[OfflineVertex(id=u, group="d") for u in range(2)],
        online=[OnlineType(id=0, group="r", p=1.0, patience=patience_v)],
        edges=[Edge(u=u, v=0, p_e=p_e, w_op=1.0) for u in range(2)],
        groups=["d", "r"],
    )


def test_availability_state():
    inst = fan_instance().model_copy(
        update={
            "offline": [
                OfflineVertex(id=0, group="d", patience=2),
                OfflineVertex(id=1, group="d"),
            ]
        }
    )
    state = algorithms.AvailabilityState(inst)
    state.record(0, False)
    assert state.available(0)
    assert state.failed_probes == {0: 1}
    state.record(0, False)
    assert not state.available(0)
    state.record(1, True)
    assert state.matched == {1}
    assert_array_equal(state.available_mask(), [False, False])
    with pytest.raises(AssertionError):
        state.record(1, True)


def test_probe_sequence_skips_unavailable():
    inst = fan_instance(patience_v=1)
    state = algorithms.AvailabilityState(inst)
    state.record(0, True)
    rng = np.random.default_rng(0)
    outcome = algorithms.probe_sequence(inst, state, [0, 1], 1, rng)
    assert outcome.matched_edge == 1
    assert [p.edge for p in outcome.probes] == [1]


def test_probe_sequence_patience():
    inst = fan_instance(patience_v=1, p_e=0.0)
    state = algorithms.AvailabilityState(inst)
    rng = np.random.default_rng(0)
    outcome = algorithms.probe_sequence(inst, state, [0, 1], 1, rng)
    assert outcome.matched_edge is None
    assert [(p.edge, p.success) for p in outcome.probes] == [(0, False)]
    assert state.failed_probes == {0: 1}


def test_ppdr_marginals():
    inst = fan_instance()
    rng = np.random.default_rng(42)
    n = 20_000
    matched = np.zeros(2)
    for _ in range(n):
        state = algorithms.AvailabilityState(inst)
        outcome = algorithms.ppdr(inst, [0, 1], [0.6, 0.6], state, 2, rng)
        assert outcome.matched_edge is not None
        matched[outcome.matched_edge] += 1
    # Rounding keeps one edge w.p. 0.8 and both w.p. 0.2, probed in random
    # order, so each edge is matched half the time
    sigma = np.sqrt(0.25 / n)
    assert_allclose(matched / n, [0.5, 0.5], atol=4 * sigma)


def test_ppdr_precondition():
    inst = fan_instance(patience_v=1)
    state = algorithms.AvailabilityState(inst)
    rng = np.random.default_rng(0)
    with pytest.raises(PreconditionError, match="patience"):
        algorithms.ppdr(inst, [0, 1], [0.6, 0.6], state, 1, rng)
    outcome = algorithms.ppdr(inst, [], [], state, 1, rng)
    assert outcome == algorithms.REJECT


def test_tsf_requirements():
    inst = make_hardness_group_instance(9)
    frag = fragment_types(inst)
    bundle = benchmarks(frag)
    with pytest.raises(InstanceError, match="fragmented"):
        algorithms.Tsf(inst, bundle, OPERATOR_ONLY)

    kad_bundle = benchmarks(to_kad(frag))
    with pytest.raises(InstanceError, match="KIID benchmark"):
        algorithms.Tsf(frag, kad_bundle, OPERATOR_ONLY)


def test_tsf_traces():
    inst = fragment_types(make_hardness_group_instance(9))
    bundle = benchmarks(inst)
    w = Weights(alpha=0.4, beta=0.3, gamma=0.2)
    rng = np.random.default_rng(5)
    policy = algorithms.Tsf(inst, bundle, w)
    traces = [policy.run(rng) for _ in range(200)]
    for tr in traces:
        assert check_trace(inst, tr) == []
        assert len(tr.events) == 9
        assert tr.clamped == 0
        assert set(tr.realized_on_utility) == set(range(9))

    solutions = [ev.solution for tr in traces for ev in tr.events]
    # Each round skips with probability 0.1
    assert 0.05 < solutions.count(None) / len(solutions) < 0.15
    assert Objective.online_fair in solutions


def test_exact_rho(two_round_kad):
    bundle = benchmarks(two_round_kad)
    table = algorithms.exact_rho(two_round_kad, bundle, OPERATOR_ONLY)
    assert table.simulations_used == 0
    assert_allclose(table.rho, [[1.0, 0.5], [1.0, 0.5]])


def test_estimate_rho(two_round_kad):
    bundle = benchmarks(two_round_kad)
    n = 20_000
    rng = np.random.default_rng(9)
    table = algorithms.estimate_rho(
        two_round_kad, bundle, OPERATOR_ONLY, n, rng
    )
    assert table.simulations_used == n
    assert_array_equal(table.rho[:, 0], [1, 1])
    sigma = np.sqrt(0.25 / n)
    assert_allclose(table.rho[:, 1], [0.5, 0.5], atol=3 * sigma)

    with pytest.raises(PreconditionError):
        algorithms.estimate_rho(two_round_kad, bundle, OPERATOR_ONLY, 0, rng)


def test_tsf_kad_ratio(two_round_kad):
    bundle = benchmarks(two_round_kad)
    table = algorithms.exact_rho(two_round_kad, bundle, OPERATOR_ONLY)
    policy = algorithms.TsfKad(two_round_kad, bundle, OPERATOR_ONLY, table)
    assert_allclose(
        policy.probe_probabilities(Objective.operator, 0, 0, [0]), [0.5]
    )

    rng = np.random.default_rng(11)
    n = 20_000
    traces = [policy.run(rng) for _ in range(n)]
    assert all(check_trace(two_round_kad, tr) == [] for tr in traces)
    assert sum(tr.clamped for tr in traces) == 0

    # Half the weight of the operator solution survives attenuation
    est = evaluate_objectives(two_round_kad, traces)
    ratio = est.operator.mean / bundle.opt_op
    assert ratio >= 0.5 - 3 * est.operator.stderr
    assert ratio == pytest.approx(0.5, abs=4 * est.operator.stderr)


def test_tsf_kad_preconditions(two_round_kad, pair_instance):
    bundle = benchmarks(two_round_kad)
    table = algorithms.exact_rho(two_round_kad, bundle, OPERATOR_ONLY)
    with pytest.raises(PreconditionError, match="lambda"):
        algorithms.TsfKad(two_round_kad, bundle, OPERATOR_ONLY, table, lam=0)
    with pytest.raises(PreconditionError, match="different weights"):
        algorithms.TsfKad(two_round_kad, bundle, Weights(beta=1.0), table)
    with pytest.raises(InstanceError, match="KAD instance"):
        algorithms.TsfKad(pair_instance, bundle, OPERATOR_ONLY, table)


def test_tsf_kad_clamps(two_round_kad):
    bundle = benchmarks(two_round_kad)
    table = algorithms.exact_rho(two_round_kad, bundle, OPERATOR_ONLY)
    stale = algorithms.RhoTable(
        np.array([[1.0, 0.0], [1.0, 0.0]]), 1, OPERATOR_ONLY, 0.5
    )
    policy = algorithms.TsfKad(two_round_kad, bundle, OPERATOR_ONLY, stale)
    assert_array_equal(
        policy.probe_probabilities(Objective.operator, 1, 1, [1]), [0]
    )
    assert policy.clamped == 0

    inflated = bundle.x_star.edge_values() * 4
    policy = algorithms.TsfKad(two_round_kad, bundle, OPERATOR_ONLY, table)
    policy.solutions[Objective.operator] = inflated
    assert_allclose(
        policy.probe_probabilities(Objective.operator, 0, 0, [0]), [1.0]
    )
    assert policy.clamped == 1
    policy.start()
    assert policy.clamped == 0


def test_tsf_kad_clamp_counted_once():
    inst = to_kad(fan_instance())
    bundle = benchmarks(inst)
    table = algorithms.exact_rho(inst, bundle, OPERATOR_ONLY)
    policy = algorithms.TsfKad(inst, bundle, OPERATOR_ONLY, table)
    # Both entries overflow and so does their total
    policy.solutions[Objective.operator] = np.full((2, 1), 4.0)
    state = algorithms.AvailabilityState(inst)
    obj, outcome = policy.serve(0, 0, state, np.random.default_rng(0))
    assert obj is Objective.operator
    assert len(outcome.probes) == 1
    assert policy.clamped == 1


def test_reduce_individual_to_group(two_round_kad):
    reduced = algorithms.reduce_individual_to_group(two_round_kad)
    assert reduced.arrival_model is ArrivalModel.kad
    assert [u.group for u in reduced.offline] == ["offline:0"]
    assert [v.group for v in reduced.online] == ["round:0"] * 2 + [
        "round:1"
    ] * 2
    assert [v.p_t for v in reduced.online] == [
        [1.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 1.0],
    ]
    assert [(e.u, e.v) for e in reduced.edges] == [
        (0, 0),
        (0, 1),
        (0, 2),
        (0, 3),
    ]
    assert reduced.groups == ["offline:0", "round:0", "round:1"]
