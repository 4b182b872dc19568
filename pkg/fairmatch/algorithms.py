# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Online matching policies driven by the benchmark LP solutions.

All policies share one simulation loop (``OnlinePolicy.run``) so that arrival
sampling, availability, and patience accounting are identical for the
LP-based algorithms and the greedy baselines.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .instance import (
    arrival_matrix,
    edges_by_offline,
    edges_by_online,
    is_fragmented,
    to_kad,
)
from .lp import BenchmarkBundle
from .model import (
    ArrivalModel,
    Instance,
    InstanceError,
    Objective,
    OfflineVertex,
    OnlineType,
    PreconditionError,
    Probe,
    RoundEvent,
    RunTrace,
    Weights,
)
from .rounding import dependent_round, random_permutation

__all__ = [
    "AvailabilityState",
    "OnlinePolicy",
    "ProbeOutcome",
    "RhoTable",
    "Tsf",
    "TsfKad",
    "Weights",
    "estimate_rho",
    "exact_rho",
    "ppdr",
    "probe_sequence",
    "reduce_individual_to_group",
    "run_tsf",
    "run_tsf_kad",
]

log = logging.getLogger(__name__)

PATIENCE_TOLERANCE = 1e-9
"Slack allowed when a fractional edge vector is compared to patience"

SOLUTIONS = (Objective.operator, Objective.offline_fair, Objective.online_fair)


class AvailabilityState:
    """Which offline vertices can still be probed during one episode."""

    def __init__(self, inst: Instance):
        self.patience = np.array([u.patience for u in inst.offline])
        self.failed = np.zeros(len(inst.offline), dtype=int)
        self.is_matched = np.zeros(len(inst.offline), dtype=bool)

    @property
    def matched(self) -> set[int]:
        return set(np.flatnonzero(self.is_matched).tolist())

    @property
    def failed_probes(self) -> dict[int, int]:
        return {
            int(u): int(n) for u, n in enumerate(self.failed) if n > 0
        }

    def available(self, u: int) -> bool:
        return not self.is_matched[u] and self.failed[u] < self.patience[u]

    def available_mask(self) -> np.ndarray:
        return ~self.is_matched & (self.failed < self.patience)

    def record(self, u: int, success: bool):
        assert self.available(u), f"offline vertex {u} is unavailable"
        if success:
            self.is_matched[u] = True
        else:
            self.failed[u] += 1


class ProbeOutcome(NamedTuple):
    matched_edge: Optional[int]
    probes: list[Probe]


REJECT = ProbeOutcome(None, [])


def probe_sequence(
    inst: Instance,
    state: AvailabilityState,
    candidates,
    patience_v: int,
    rng: np.random.Generator,
) -> ProbeOutcome:
    """Probe candidate edges in order until one succeeds.

    Edges whose offline vertex is unavailable are skipped without using up
    the arrival's patience.
    """
    probes = []
    for e in candidates:
        if len(probes) >= patience_v:
            break
        edge = inst.edges[int(e)]
        if not state.available(edge.u):
            continue
        success = bool(rng.random() < edge.p_e)
        state.record(edge.u, success)
        probes.append(Probe(edge=int(e), success=success))
        if success:
            return ProbeOutcome(int(e), probes)
    return ProbeOutcome(None, probes)


def ppdr(
    inst: Instance,
    edge_ids,
    xv,
    state: AvailabilityState,
    patience_v: int,
    rng: np.random.Generator,
) -> ProbeOutcome:
    """Probe with permuted dependent rounding.

    The fractional vector ``xv`` over ``edge_ids`` is rounded to a set of at
    most ``patience_v`` edges, which are probed in a uniformly random order.
    """
    edge_ids = np.asarray(edge_ids, dtype=int)
    xv = np.asarray(xv, dtype=float)
    if xv.sum() > patience_v + PATIENCE_TOLERANCE:
        raise PreconditionError(
            f"edge vector sums to {xv.sum():.12g}, more than the arrival "
            f"patience {patience_v}"
        )
    if not len(edge_ids):
        return REJECT
    chosen = edge_ids[dependent_round(xv, rng).bits == 1]
    order = chosen[random_permutation(len(chosen), rng)]
    return probe_sequence(inst, state, order, patience_v, rng)


class OnlinePolicy(ABC):
    """Serve one arrival per round over a full horizon."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.by_online = edges_by_online(inst)
        self.arrivals = arrival_matrix(inst)
        self._cdf = np.cumsum(self.arrivals, axis=0)
        self.clamped = 0

    def sample_arrival(self, t: int, rng: np.random.Generator) -> int:
        cdf = self._cdf[:, t]
        v = np.searchsorted(cdf, rng.random() * cdf[-1], side="right")
        return int(min(v, len(cdf) - 1))

    def start(self):
        """Reset per-episode bookkeeping."""
        self.clamped = 0

    @abstractmethod
    def serve(
        self,
        t: int,
        v: int,
        state: AvailabilityState,
        rng: np.random.Generator,
    ) -> tuple[Optional[Objective], ProbeOutcome]:
        """Probe on behalf of an arrival of type ``v`` in round ``t``."""

    def observe(self, t: int, v: int, outcome: ProbeOutcome):
        """Hook called after every round."""

    def run(self, rng: np.random.Generator) -> RunTrace:
        inst = self.inst
        state = AvailabilityState(inst)
        self.start()
        events = []
        op = 0.0
        off = {u.id: 0.0 for u in inst.offline}
        on = dict.fromkeys(range(inst.horizon), 0.0)
        for t in range(inst.horizon):
            v = self.sample_arrival(t, rng)
            solution, outcome = self.serve(t, v, state, rng)
            if outcome.matched_edge is not None:
                e = inst.edges[outcome.matched_edge]
                op += e.w_op
                off[e.u] += e.w_off
                on[t] += e.w_on
            events.append(
                RoundEvent(
                    t=t, arrival=v, solution=solution, probes=outcome.probes
                )
            )
            self.observe(t, v, outcome)
        return RunTrace(
            events=events,
            realized_op_utility=op,
            realized_off_utility=off,
            realized_on_utility=on,
            clamped=self.clamped,
        )


def _choose_solution(w: Weights, rng: np.random.Generator):
    r = rng.random()
    for obj, threshold in zip(SOLUTIONS, w.cumulative()):
        if r < threshold:
            return obj
    return None


class Tsf(OnlinePolicy):
    """Sample a benchmark solution per arrival and probe it with PPDR."""

    def __init__(self, inst: Instance, bundle: BenchmarkBundle, w: Weights):
        if not is_fragmented(inst):
            raise InstanceError("TSF needs a fragmented KIID instance")
        if bundle.arrival_model is not ArrivalModel.kiid:
            raise InstanceError("TSF needs KIID benchmark solutions")
        super().__init__(inst)
        self.weights = w

        # Per-type fractional vectors of each solution
        self.vectors: dict[Objective, list[np.ndarray]] = {}
        for obj in SOLUTIONS:
            x = np.clip(bundle.solution(obj).edge_values(), 0, 1)
            if len(x) != len(inst.edges):
                raise InstanceError("benchmark was solved on another instance")
            per_type = []
            for v, edges in enumerate(self.by_online):
                xv = x[edges]
                limit = inst.online[v].patience
                if limit < xv.sum() <= limit + 1e-6:
                    xv = xv * (limit / xv.sum())
                per_type.append(xv)
            self.vectors[obj] = per_type

    def serve(self, t, v, state, rng):
        obj = _choose_solution(self.weights, rng)
        if obj is None:
            return None, REJECT
        outcome = ppdr(
            self.inst,
            self.by_online[v],
            self.vectors[obj][v],
            state,
            self.inst.online[v].patience,
            rng,
        )
        return obj, outcome


@dataclass(frozen=True)
class RhoTable:
    """Probability that each edge's offline vertex is free at each round."""

    rho: np.ndarray
    "Availability by (edge, round)"

    simulations_used: int
    "Simulations per round prefix; zero when computed in closed form"

    weights: Weights
    lam: float

    def __post_init__(self):
        assert np.all((self.rho >= 0) & (self.rho <= 1))
        assert self.rho.shape[1] == 0 or np.all(self.rho[:, 0] == 1)


def _require_kad(inst: Instance, bundle: BenchmarkBundle):
    if inst.arrival_model is not ArrivalModel.kad:
        raise InstanceError("TSF-KAD needs a KAD instance")
    if any(e.p_e != 1 for e in inst.edges):
        raise InstanceError("TSF-KAD needs p_e = 1 on every edge")
    if bundle.arrival_model is not ArrivalModel.kad:
        raise InstanceError("TSF-KAD needs KAD benchmark solutions")


class TsfKad(OnlinePolicy):
    """Probe one available edge with availability-corrected probabilities.

    The probe probability of edge e in round t is the solution's conditional
    assignment s[e, t] / p[v, t], attenuated by lam / rho[e, t]. Probabilities
    above one (or distributions whose total exceeds one) can only arise from
    estimation noise in rho; they are clamped and counted, never renormalized.
    """

    def __init__(
        self,
        inst: Instance,
        bundle: BenchmarkBundle,
        w: Weights,
        rho: RhoTable,
        lam: float = 0.5,
    ):
        _require_kad(inst, bundle)
        if not 0 < lam <= 1:
            raise PreconditionError(f"lambda must lie in (0, 1]: {lam}")
        if rho.weights != w or rho.lam != lam:
            raise PreconditionError(
                "rho table was estimated with different weights or lambda"
            )
        super().__init__(inst)
        self.weights = w
        self.lam = lam
        self.rho = rho.rho
        if self.rho.shape != (len(inst.edges), inst.horizon):
            raise PreconditionError("rho table does not match the instance")
        self.solutions = {
            obj: bundle.solution(obj).edge_values() for obj in SOLUTIONS
        }

    def probe_probabilities(self, obj: Objective, t: int, v: int, edges):
        """Clamped probe probability of each edge for one solution.

        A distribution with an entry above one, or a total above one, counts
        as one clamp.
        """
        p_vt = self.arrivals[v, t]
        s = self.solutions[obj][edges, t]
        rho = self.rho[edges, t]
        q = np.zeros(len(edges))
        np.divide(
            s * self.lam, p_vt * rho, out=q, where=(rho > 0) & (s > 0)
        )
        q[(rho <= 0) & (s > 0)] = np.inf
        over = q > 1
        q[over] = 1.0
        if over.any() or q.sum() > 1 + PATIENCE_TOLERANCE:
            self.clamped += 1
        return q

    def serve(self, t, v, state, rng):
        edges = [
            e
            for e in self.by_online[v]
            if state.available(self.inst.edges[e].u)
        ]
        if not edges or self.arrivals[v, t] <= 0:
            return None, REJECT
        obj = _choose_solution(self.weights, rng)
        if obj is None:
            return None, REJECT
        q = self.probe_probabilities(obj, t, v, edges)
        i = int(np.searchsorted(np.cumsum(q), rng.random(), side="right"))
        if i >= len(edges):
            return obj, REJECT
        return obj, probe_sequence(self.inst, state, [edges[i]], 1, rng)


def estimate_rho(
    inst: Instance,
    bundle: BenchmarkBundle,
    w: Weights,
    simulations: int,
    rng: np.random.Generator,
    lam: float = 0.5,
) -> RhoTable:
    """Estimate edge availability round by round with forward simulation.

    The table through round t is final before any simulation plays round t,
    so stepping ``simulations`` persistent episodes one round at a time is
    equivalent to replaying each prefix from scratch.
    """
    if simulations < 1:
        raise PreconditionError(f"need at least one simulation: {simulations}")
    _require_kad(inst, bundle)

    T = inst.horizon
    rho = np.ones((len(inst.edges), T))
    owner = np.array([e.u for e in inst.edges], dtype=int)
    policy = TsfKad(
        inst, bundle, w, RhoTable(rho, simulations, w, lam), lam=lam
    )
    states = [AvailabilityState(inst) for _ in range(simulations)]
    for t in range(T - 1):
        for state in states:
            v = policy.sample_arrival(t, rng)
            policy.serve(t, v, state, rng)
        free = np.mean([s.available_mask() for s in states], axis=0)
        rho[:, t + 1] = free[owner]
        log.debug(
            "Round %d: min rho %.4g, clamps so far %d",
            t + 1,
            rho[:, t + 1].min(initial=1.0),
            policy.clamped,
        )

    if policy.clamped:
        log.info(
            "Clamped %d probe distributions while estimating rho",
            policy.clamped,
        )
    return RhoTable(rho, simulations, w, lam)


def exact_rho(
    inst: Instance, bundle: BenchmarkBundle, w: Weights, lam: float = 0.5
) -> RhoTable:
    """Closed-form availability when no probe probability is clamped."""
    _require_kad(inst, bundle)
    mix = (
        w.alpha * bundle.x_star.edge_values()
        + w.beta * bundle.y_star.edge_values()
        + w.gamma * bundle.z_star.edge_values()
    )
    by_u = np.zeros((len(inst.offline), inst.horizon))
    for u, edges in enumerate(edges_by_offline(inst)):
        if edges:
            by_u[u] = mix[edges].sum(axis=0)
    before = np.cumsum(by_u, axis=1) - by_u
    free = np.clip(1 - lam * before, 0, 1)
    owner = [e.u for e in inst.edges]
    rho = free[owner] if owner else np.ones((0, inst.horizon))
    return RhoTable(rho, 0, w, lam)


def run_tsf(
    inst: Instance,
    bundle: BenchmarkBundle,
    w: Weights,
    rng: np.random.Generator,
) -> RunTrace:
    return Tsf(inst, bundle, w).run(rng)


def run_tsf_kad(
    inst: Instance,
    bundle: BenchmarkBundle,
    w: Weights,
    rho: RhoTable,
    rng: np.random.Generator,
    lam: float = 0.5,
) -> RunTrace:
    return TsfKad(inst, bundle, w, rho, lam).run(rng)


def reduce_individual_to_group(inst: Instance) -> Instance:
    """Rewrite individual fairness as group fairness on a KAD instance.

    Every offline vertex becomes its own group, and the online side is
    copied once per round so that each round's copy forms a group whose
    expected arrival count is one.
    """
    kad = to_kad(inst)
    T = kad.horizon
    V = len(kad.online)
    p = arrival_matrix(kad)

    offline = [
        OfflineVertex(id=u.id, group=f"offline:{u.id}", patience=u.patience)
        for u in kad.offline
    ]
    online = []
    edges = []
    for t in range(T):
        for v in kad.online:
            p_t = [0.0] * T
            p_t[t] = float(p[v.id, t])
            online.append(
                OnlineType(
                    id=t * V + v.id,
                    group=f"round:{t}",
                    patience=v.patience,
                    p_t=p_t,
                )
            )
        edges.extend(e.model_copy(update={"v": t * V + e.v}) for e in kad.edges)

    groups = [u.group for u in offline] + [f"round:{t}" for t in range(T)]
    return kad.model_copy(
        update={
            "offline": offline,
            "online": online,
            "edges": edges,
            "groups": groups,
        }
    )
