# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Validate, transform, and index three-sided matching instances."""

import warnings
from collections import defaultdict
from pathlib import Path

import numpy as np

from .model import (
    ArrivalModel,
    Edge,
    Instance,
    InstanceError,
    OnlineType,
    RunTrace,
    Violation,
)

__all__ = [
    "arrival_matrix",
    "availability_matrix",
    "check_trace",
    "dump_instance",
    "edges_by_offline",
    "edges_by_online",
    "expected_arrivals",
    "fragment_types",
    "is_fragmented",
    "load_instance",
    "offline_groups",
    "online_groups",
    "rescore_trace",
    "to_kad",
    "validate_instance",
    "with_unit_fairness_utilities",
]

ARRIVAL_TOLERANCE = 1e-9
"Allowed deviation of the per-round arrival mass from one"

INTEGRALITY_TOLERANCE = 1e-9
"Allowed deviation of KIID n_v from an integer"


def load_instance(path: Path) -> Instance:
    return Instance.model_validate_json(Path(path).read_text())


def dump_instance(inst: Instance, path: Path):
    Path(path).write_text(inst.model_dump_json(indent=1) + "\n")


def _type_probs(v: OnlineType, horizon: int) -> list[float]:
    if v.p_t is not None:
        return list(v.p_t)
    assert v.p is not None
    return [v.p] * horizon


def validate_instance(
    inst: Instance, *, require_unit_success: bool = False
) -> list[Violation]:
    """Check every instance invariant, returning the broken ones.

    Set ``require_unit_success`` when the instance is meant for TSF-KAD, whose
    guarantee needs every probe to succeed.
    """
    result = []

    def fail(field, rule, detail=""):
        result.append(Violation(field=field, rule=rule, detail=detail))

    groups = set(inst.groups)
    if len(groups) != len(inst.groups):
        fail("groups", "duplicate group identifier")

    for side in ("offline", "online"):
        for i, vtx in enumerate(getattr(inst, side)):
            where = f"{side}[{i}]"
            if vtx.id != i:
                fail(where, "id must equal list position", f"id={vtx.id}")
            if vtx.patience < 1:
                fail(where, "patience must be at least 1")
            if vtx.group not in groups:
                fail(where, "group is not declared", vtx.group)

    T = inst.horizon
    mass = np.zeros(T)
    for i, v in enumerate(inst.online):
        where = f"online[{i}]"
        if inst.arrival_model is ArrivalModel.kiid and v.p is None:
            fail(where, "KIID type needs a stationary probability 'p'")
        if inst.arrival_model is ArrivalModel.kad and v.p_t is None:
            fail(where, "KAD type needs per-round probabilities 'p_t'")
        probs = _type_probs(v, T)
        if len(probs) != T:
            fail(where, "p_t length must equal the horizon", f"{len(probs)}")
            continue
        if any(not (0 <= p <= 1) for p in probs):
            fail(where, "arrival probabilities must lie in [0, 1]")
        mass += probs
    for t in np.flatnonzero(np.abs(mass - 1) > ARRIVAL_TOLERANCE):
        fail(
            "online",
            "arrival mass must sum to one in every round",
            f"round {t}: {mass[t]:.12g}",
        )

    seen = set()
    for i, e in enumerate(inst.edges):
        where = f"edges[{i}]"
        if e.u >= len(inst.offline):
            fail(where, "offline endpoint does not exist", f"u={e.u}")
        if e.v >= len(inst.online):
            fail(where, "online endpoint does not exist", f"v={e.v}")
        if not (0 <= e.p_e <= 1):
            fail(where, "success probability must lie in [0, 1]")
        if min(e.w_op, e.w_off, e.w_on) < 0:
            fail(where, "utilities must be nonnegative")
        if (e.u, e.v) in seen:
            fail(where, "duplicate edge", f"({e.u}, {e.v})")
        seen.add((e.u, e.v))
        if require_unit_success and e.p_e != 1:
            fail(where, "unit-success: p_e must be 1", f"p_e={e.p_e}")

    return result


def arrival_matrix(inst: Instance) -> np.ndarray:
    """Arrival probability p_{v,t} as a (|V|, T) array."""
    result = np.zeros((len(inst.online), inst.horizon))
    for v in inst.online:
        probs = _type_probs(v, inst.horizon)
        if len(probs) != inst.horizon:
            raise InstanceError(f"online type {v.id} has {len(probs)} rounds")
        result[v.id] = probs
    return result


def expected_arrivals(inst: Instance, v: int) -> float:
    """Expected number of arrivals n_v of an online type."""
    if not 0 <= v < len(inst.online):
        raise InstanceError(f"unknown online type {v}")
    return float(sum(_type_probs(inst.online[v], inst.horizon)))


def is_fragmented(inst: Instance) -> bool:
    """Whether a KIID instance has n_v = 1 for every type."""
    return inst.arrival_model is ArrivalModel.kiid and all(
        abs(expected_arrivals(inst, v.id) - 1) <= INTEGRALITY_TOLERANCE
        for v in inst.online
    )


def fragment_types(inst: Instance) -> Instance:
    """Split each KIID type with n_v = k into k unit types.

    Copies inherit group, patience, and edges, and arrive with probability
    1/T each, so every benchmark optimum is unchanged.
    """
    if inst.arrival_model is not ArrivalModel.kiid:
        raise InstanceError("only KIID instances can be fragmented")

    T = inst.horizon
    by_online = edges_by_online(inst)
    online = []
    edges = []
    for v in inst.online:
        n_v = expected_arrivals(inst, v.id)
        copies = round(n_v)
        if abs(n_v - copies) > INTEGRALITY_TOLERANCE or copies < 1:
            raise InstanceError(
                f"online type {v.id} has non-integer or zero n_v={n_v:.12g}"
            )
        for _ in range(copies):
            vid = len(online)
            online.append(
                OnlineType(
                    id=vid, group=v.group, patience=v.patience, p=1 / T
                )
            )
            edges.extend(
                inst.edges[e].model_copy(update={"v": vid})
                for e in by_online[v.id]
            )

    return inst.model_copy(update={"online": online, "edges": edges})


def to_kad(inst: Instance) -> Instance:
    """Express a KIID instance with explicit per-round probabilities."""
    if inst.arrival_model is ArrivalModel.kad:
        return inst
    online = [
        v.model_copy(update={"p": None, "p_t": [v.p] * inst.horizon})
        for v in inst.online
    ]
    return inst.model_copy(
        update={"arrival_model": ArrivalModel.kad, "online": online}
    )


def with_unit_fairness_utilities(inst: Instance) -> Instance:
    """Replace both sides' utilities with one (match size only)."""
    edges = [
        e.model_copy(update={"w_off": 1.0, "w_on": 1.0}) for e in inst.edges
    ]
    return inst.model_copy(update={"edges": edges})


def edges_by_offline(inst: Instance) -> list[list[int]]:
    result: list[list[int]] = [[] for _ in inst.offline]
    for i, e in enumerate(inst.edges):
        result[e.u].append(i)
    return result


def edges_by_online(inst: Instance) -> list[list[int]]:
    result: list[list[int]] = [[] for _ in inst.online]
    for i, e in enumerate(inst.edges):
        result[e.v].append(i)
    return result


def offline_groups(inst: Instance) -> dict[str, list[int]]:
    """Offline members of each group that has any, in declaration order."""
    members = defaultdict(list)
    for u in inst.offline:
        members[u.group].append(u.id)
    return {g: members[g] for g in inst.groups if members[g]}


def online_groups(inst: Instance) -> dict[str, list[int]]:
    """Online members of each group with positive expected arrivals.

    Groups whose types never arrive have no meaningful average and are dropped
    with a warning.
    """
    members = defaultdict(list)
    for v in inst.online:
        members[v.group].append(v.id)
    result = {}
    for g in inst.groups:
        if not members[g]:
            continue
        if sum(expected_arrivals(inst, v) for v in members[g]) <= 0:
            warnings.warn(
                f"Dropping online group {g!r}: its types never arrive",
                stacklevel=2,
            )
            continue
        result[g] = members[g]
    return result


def _replay(inst: Instance, trace: RunTrace, visit=None) -> list[str]:
    """Step through a trace, enforcing availability and patience."""
    errors = []
    matched: set[int] = set()
    failed = np.zeros(len(inst.offline), dtype=int)
    patience = [u.patience for u in inst.offline]
    op = 0.0
    off: dict[int, float] = defaultdict(float)
    on: dict[int, float] = defaultdict(float)

    for ev in trace.events:
        if visit is not None:
            visit(ev.t, matched, failed)
        if not 0 <= ev.arrival < len(inst.online):
            errors.append(f"round {ev.t}: unknown arrival {ev.arrival}")
            continue
        if len(ev.probes) > inst.online[ev.arrival].patience:
            errors.append(f"round {ev.t}: probes exceed online patience")
        successes = 0
        for probe in ev.probes:
            if probe.edge >= len(inst.edges):
                errors.append(f"round {ev.t}: unknown edge {probe.edge}")
                continue
            e: Edge = inst.edges[probe.edge]
            if e.v != ev.arrival:
                errors.append(f"round {ev.t}: edge {probe.edge} not incident")
            if successes:
                errors.append(f"round {ev.t}: probe after a successful match")
            if e.u in matched or failed[e.u] >= patience[e.u]:
                errors.append(
                    f"round {ev.t}: probe to unavailable offline {e.u}"
                )
            if probe.success:
                successes += 1
                matched.add(e.u)
                op += e.w_op
                off[e.u] += e.w_off
                on[ev.t] += e.w_on
            else:
                failed[e.u] += 1

    def differs(a, b):
        return abs(a - b) > 1e-9 * max(1.0, abs(a))

    if differs(op, trace.realized_op_utility):
        errors.append("operator utility does not match the probes")
    for u in set(off) | set(trace.realized_off_utility):
        if differs(off[u], trace.realized_off_utility.get(u, 0.0)):
            errors.append(f"offline {u} utility does not match the probes")
    for t in set(on) | set(trace.realized_on_utility):
        if differs(on[t], trace.realized_on_utility.get(t, 0.0)):
            errors.append(f"round {t} utility does not match the probes")
    return errors


def check_trace(inst: Instance, trace: RunTrace) -> list[str]:
    """List every way a trace breaks the matching rules."""
    return _replay(inst, trace)


def rescore_trace(inst: Instance, trace: RunTrace) -> RunTrace:
    """Recompute realized utilities of a trace with another instance's edges.

    The instance must share the edge list (by index) of the one that produced
    the trace, as ``with_unit_fairness_utilities`` does.
    """
    op = 0.0
    off = dict.fromkeys(trace.realized_off_utility, 0.0)
    on = dict.fromkeys(trace.realized_on_utility, 0.0)
    for ev in trace.events:
        for probe in ev.probes:
            if probe.success:
                e = inst.edges[probe.edge]
                op += e.w_op
                off[e.u] = off.get(e.u, 0.0) + e.w_off
                on[ev.t] = on.get(ev.t, 0.0) + e.w_on
    return trace.model_copy(
        update={
            "realized_op_utility": op,
            "realized_off_utility": off,
            "realized_on_utility": on,
        }
    )


def availability_matrix(inst: Instance, trace: RunTrace) -> np.ndarray:
    """Whether each offline vertex is available at the start of each round."""
    result = np.zeros((len(inst.offline), inst.horizon), dtype=bool)
    patience = np.array([u.patience for u in inst.offline])

    def visit(t, matched, failed):
        avail = failed < patience
        avail[list(matched)] = False
        result[:, t] = avail

    _replay(inst, trace, visit)
    return result
