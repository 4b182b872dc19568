# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Build and solve the benchmark linear programs.

Every program is stored as a maximization ``c @ x`` subject to sparse
``A_ub @ x <= b_ub`` rows and per-variable bounds. Max-min objectives use an
auxiliary variable ``eta`` bounded above by one row per group (or per vertex
or round for individual fairness).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .instance import (
    arrival_matrix,
    edges_by_offline,
    edges_by_online,
    expected_arrivals,
    is_fragmented,
    offline_groups,
    online_groups,
    to_kad,
)
from .model import ArrivalModel, Instance, InstanceError, LpError, Objective

__all__ = [
    "BenchmarkBundle",
    "LpProgram",
    "LpSolution",
    "LpStatus",
    "benchmarks",
    "build_individual_lp",
    "build_kad_lp",
    "build_kiid_lp",
    "check_solution",
    "group_values",
    "individual_benchmarks",
    "solve_lp",
]

log = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-6
"Maximum row violation accepted from the solver"


class LpStatus(Enum):
    optimal = "optimal"
    infeasible = "infeasible"
    unbounded = "unbounded"


@dataclass(frozen=True)
class LpProgram:
    """Sparse maximization problem with named variables and rows."""

    variables: list[str]
    objective: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    bounds: np.ndarray
    "Lower and upper bound of each variable, shape (n, 2)"
    row_names: list[str]
    x_shape: tuple[int, ...]
    "Shape of the edge variables: (E,) for KIID or (E, T) for KAD"
    kind: Objective
    eta: Optional[int] = None
    "Index of the max-min variable, if any"

    @property
    def num_edge_variables(self) -> int:
        return int(np.prod(self.x_shape))


class _LpBuilder:
    """Accumulate variables and inequality rows for an ``LpProgram``."""

    def __init__(self):
        self.names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.cost: dict[int, float] = {}

    def add_variable(self, name: str, lo: float, hi: float) -> int:
        assert lo <= hi, f"empty bounds for {name}"
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        return len(self.names) - 1

    def add_row(self, name: str, coeffs: dict[int, float], rhs: float):
        row = len(self.rhs)
        for col, val in coeffs.items():
            assert 0 <= col < len(self.names), f"{name}: unknown variable"
            if val != 0:
                self.rows.append(row)
                self.cols.append(col)
                self.vals.append(val)
        self.rhs.append(rhs)
        self.row_names.append(name)

    def maximize(self, coeffs: dict[int, float]):
        for col, val in coeffs.items():
            assert 0 <= col < len(self.names)
            self.cost[col] = self.cost.get(col, 0.0) + val

    def build(self, x_shape, kind, eta=None) -> LpProgram:
        n = len(self.names)
        c = np.zeros(n)
        for col, val in self.cost.items():
            c[col] = val
        a_ub = sp.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n)
        )
        return LpProgram(
            variables=self.names,
            objective=c,
            a_ub=a_ub,
            b_ub=np.array(self.rhs, dtype=float),
            bounds=np.column_stack((self.lower, self.upper)).reshape(n, 2),
            row_names=self.row_names,
            x_shape=tuple(x_shape),
            kind=kind,
            eta=eta,
        )


def _add_fairness_rows(
    builder: _LpBuilder, eta: int, groups: dict, contribution, prefix: str
):
    """Bound eta by the normalized utility expression of every group."""
    for g, (coeffs, denom) in groups.items():
        row = {eta: 1.0}
        for col, val in contribution(coeffs).items():
            row[col] = row.get(col, 0.0) - val / denom
        builder.add_row(f"{prefix}[{g}]", row, 0.0)


def _fairness_groups(inst: Instance, objective: Objective):
    """Members and denominators of the groups on the fairness side."""
    if objective is Objective.offline_fair:
        groups = offline_groups(inst)
        result = {g: (m, len(m)) for g, m in groups.items()}
    else:
        groups = online_groups(inst)
        result = {
            g: (m, sum(expected_arrivals(inst, v) for v in m))
            for g, m in groups.items()
        }
    if not result:
        raise InstanceError(
            f"no group has members on the {objective.value} side"
        )
    return result


def build_kiid_lp(
    inst: Instance, objective: Objective, *, fragmented_only: bool = True
) -> LpProgram:
    """Benchmark LP for known i.i.d. arrivals.

    With ``fragmented_only`` the instance must have n_v = 1 for every type;
    otherwise the online rows are scaled by n_v, which gives the same optimum
    as the fragmented instance.
    """
    if inst.arrival_model is not ArrivalModel.kiid:
        raise InstanceError("KIID benchmark needs a KIID instance")
    if fragmented_only and not is_fragmented(inst):
        raise InstanceError(
            "KIID benchmark needs a fragmented instance (n_v = 1 for all v)"
        )

    b = _LpBuilder()
    n_v = [expected_arrivals(inst, v.id) for v in inst.online]
    x = [
        b.add_variable(f"x[{i}]", 0.0, max(1.0, n_v[e.v]))
        for i, e in enumerate(inst.edges)
    ]
    p = [e.p_e for e in inst.edges]

    for u, edges in enumerate(edges_by_offline(inst)):
        b.add_row(f"offline_match[{u}]", {x[e]: p[e] for e in edges}, 1.0)
        b.add_row(
            f"offline_patience[{u}]",
            {x[e]: 1.0 for e in edges},
            inst.offline[u].patience,
        )
    for v, edges in enumerate(edges_by_online(inst)):
        b.add_row(f"online_match[{v}]", {x[e]: p[e] for e in edges}, n_v[v])
        b.add_row(
            f"online_patience[{v}]",
            {x[e]: 1.0 for e in edges},
            inst.online[v].patience * n_v[v],
        )

    eta = None
    if objective is Objective.operator:
        b.maximize({x[i]: e.w_op * e.p_e for i, e in enumerate(inst.edges)})
    else:
        eta = b.add_variable("eta", 0.0, np.inf)
        b.maximize({eta: 1.0})
        incident = (
            edges_by_offline(inst)
            if objective is Objective.offline_fair
            else edges_by_online(inst)
        )
        attr = "w_off" if objective is Objective.offline_fair else "w_on"

        def contribution(members):
            return {
                x[e]: getattr(inst.edges[e], attr) * p[e]
                for m in members
                for e in incident[m]
            }

        _add_fairness_rows(
            b, eta, _fairness_groups(inst, objective), contribution, "fair"
        )

    return b.build((len(inst.edges),), objective, eta)


def _require_unit_success(inst: Instance):
    bad = [i for i, e in enumerate(inst.edges) if e.p_e != 1]
    if bad:
        raise InstanceError(
            f"KAD benchmark needs p_e = 1 on every edge; edge {bad[0]} "
            f"has p_e={inst.edges[bad[0]].p_e}"
        )


def _kad_assignment(inst: Instance) -> tuple[_LpBuilder, np.ndarray]:
    """Variables x_{e,t} and the assignment rows shared by all KAD LPs."""
    _require_unit_success(inst)
    T = inst.horizon
    b = _LpBuilder()
    x = np.array(
        [
            [b.add_variable(f"x[{i},{t}]", 0.0, 1.0) for t in range(T)]
            for i in range(len(inst.edges))
        ],
        dtype=int,
    ).reshape(len(inst.edges), T)

    for u, edges in enumerate(edges_by_offline(inst)):
        b.add_row(
            f"offline_match[{u}]",
            {x[e, t]: 1.0 for e in edges for t in range(T)},
            1.0,
        )
    p = arrival_matrix(inst)
    for v, edges in enumerate(edges_by_online(inst)):
        for t in range(T):
            b.add_row(
                f"online_arrival[{v},{t}]",
                {x[e, t]: 1.0 for e in edges},
                p[v, t],
            )
    return b, x


def build_kad_lp(inst: Instance, objective: Objective) -> LpProgram:
    """Benchmark LP for known adversarial (time-varying) arrivals."""
    if inst.arrival_model is not ArrivalModel.kad:
        raise InstanceError("KAD benchmark needs a KAD instance")
    b, x = _kad_assignment(inst)
    T = inst.horizon

    eta = None
    if objective is Objective.operator:
        b.maximize(
            {
                x[i, t]: e.w_op
                for i, e in enumerate(inst.edges)
                for t in range(T)
            }
        )
    else:
        eta = b.add_variable("eta", 0.0, np.inf)
        b.maximize({eta: 1.0})
        incident = (
            edges_by_offline(inst)
            if objective is Objective.offline_fair
            else edges_by_online(inst)
        )
        attr = "w_off" if objective is Objective.offline_fair else "w_on"

        def contribution(members):
            return {
                x[e, t]: getattr(inst.edges[e], attr)
                for m in members
                for e in incident[m]
                for t in range(T)
            }

        _add_fairness_rows(
            b, eta, _fairness_groups(inst, objective), contribution, "fair"
        )

    return b.build(x.shape, objective, eta)


def build_individual_lp(inst: Instance, side: str) -> LpProgram:
    """Individual-fairness LP over the KAD assignment polytope.

    For ``side="offline"`` eta is bounded by each offline vertex's utility;
    for ``side="online"`` by the utility of each round's arrival.
    """
    if side not in ("offline", "online"):
        raise ValueError(f"unknown side {side!r}")
    kad = to_kad(inst)
    b, x = _kad_assignment(kad)
    T = kad.horizon
    eta = b.add_variable("eta", 0.0, np.inf)
    b.maximize({eta: 1.0})

    if side == "offline":
        kind = Objective.offline_fair
        for u, edges in enumerate(edges_by_offline(kad)):
            row = {eta: 1.0}
            for e in edges:
                for t in range(T):
                    row[x[e, t]] = -kad.edges[e].w_off
            b.add_row(f"individual[{u}]", row, 0.0)
    else:
        kind = Objective.online_fair
        for t in range(T):
            row = {eta: 1.0}
            for e, edge in enumerate(kad.edges):
                row[x[e, t]] = -edge.w_on
            b.add_row(f"individual[round {t}]", row, 0.0)

    return b.build(x.shape, kind, eta)


def check_solution(
    prog: LpProgram, values: np.ndarray, tol: float = FEASIBILITY_TOLERANCE
) -> list[str]:
    """Names of the rows and bounds violated by a primal vector."""
    values = np.asarray(values, dtype=float)
    assert values.ndim == 1 and len(values) == len(prog.variables)
    result = []
    lo, hi = prog.bounds[:, 0], prog.bounds[:, 1]
    for i in np.flatnonzero((lo - values > tol) | (values - hi > tol)):
        result.append(f"bound {prog.variables[i]}={values[i]:.9g}")
    if prog.a_ub.shape[0]:
        excess = prog.a_ub @ values - prog.b_ub
        for r in np.flatnonzero(excess > tol):
            result.append(
                f"row {prog.row_names[r]} exceeded by {excess[r]:.3g}"
            )
    return result


@dataclass(frozen=True)
class LpSolution:
    program: LpProgram
    values: np.ndarray
    objective_value: float
    status: LpStatus

    def edge_values(self) -> np.ndarray:
        """Primal edge variables shaped like ``program.x_shape``."""
        n = self.program.num_edge_variables
        return self.values[:n].reshape(self.program.x_shape)


def solve_lp(prog: LpProgram) -> LpSolution:
    """Maximize a program with HiGHS and verify the primal it returns."""
    n = len(prog.variables)
    if n == 0:
        return LpSolution(prog, np.zeros(0), 0.0, LpStatus.optimal)

    has_rows = prog.a_ub.shape[0] > 0
    log.debug(
        "Solving %s LP with %d variables and %d rows",
        prog.kind.value,
        n,
        prog.a_ub.shape[0],
    )
    res = linprog(
        -prog.objective,
        A_ub=prog.a_ub if has_rows else None,
        b_ub=prog.b_ub if has_rows else None,
        bounds=[
            (lo, None if np.isinf(hi) else hi) for lo, hi in prog.bounds
        ],
        method="highs",
    )
    if res.status == 2:
        return LpSolution(prog, np.full(n, np.nan), np.nan, LpStatus.infeasible)
    if res.status == 3:
        return LpSolution(prog, np.full(n, np.nan), np.inf, LpStatus.unbounded)
    if res.status != 0:
        raise LpError(f"LP solver failed: {res.message}")

    values = np.clip(res.x, prog.bounds[:, 0], prog.bounds[:, 1])
    violations = check_solution(prog, values)
    if violations:
        raise LpError(
            "LP solver returned an infeasible primal: " + "; ".join(violations)
        )
    return LpSolution(
        prog, values, float(prog.objective @ values), LpStatus.optimal
    )


@dataclass(frozen=True)
class BenchmarkBundle:
    """Optimal solutions of the operator and two fairness LPs."""

    x_star: LpSolution
    y_star: LpSolution
    z_star: LpSolution
    arrival_model: ArrivalModel = field(default=ArrivalModel.kiid)

    @property
    def opt_op(self) -> float:
        return self.x_star.objective_value

    @property
    def opt_off(self) -> float:
        return self.y_star.objective_value

    @property
    def opt_on(self) -> float:
        return self.z_star.objective_value

    def optimum(self, objective: Objective) -> float:
        return self.solution(objective).objective_value

    def solution(self, objective: Objective) -> LpSolution:
        return {
            Objective.operator: self.x_star,
            Objective.offline_fair: self.y_star,
            Objective.online_fair: self.z_star,
        }[objective]

    def to_dict(self, primal: bool = False) -> dict:
        result: dict = {
            "opt_op": self.opt_op,
            "opt_off": self.opt_off,
            "opt_on": self.opt_on,
        }
        if primal:
            for key in ("x_star", "y_star", "z_star"):
                result[key] = getattr(self, key).edge_values().tolist()
        return result


def _solve_optimal(prog: LpProgram) -> LpSolution:
    sol = solve_lp(prog)
    if sol.status is not LpStatus.optimal:
        raise LpError(
            f"{prog.kind.value} benchmark LP is {sol.status.value}"
        )
    return sol


def benchmarks(inst: Instance) -> BenchmarkBundle:
    """Solve the three benchmark LPs of a (fragmented, if KIID) instance."""
    if inst.arrival_model is ArrivalModel.kiid:
        build = build_kiid_lp
    else:
        build = build_kad_lp
    sols = [_solve_optimal(build(inst, obj)) for obj in Objective]
    bundle = BenchmarkBundle(*sols, arrival_model=inst.arrival_model)
    log.info(
        "Benchmarks: operator=%.6g offline=%.6g online=%.6g",
        bundle.opt_op,
        bundle.opt_off,
        bundle.opt_on,
    )
    return bundle


def individual_benchmarks(inst: Instance) -> BenchmarkBundle:
    """Operator and individual-fairness optima on the KAD formulation."""
    kad = to_kad(inst)
    return BenchmarkBundle(
        _solve_optimal(build_kad_lp(kad, Objective.operator)),
        _solve_optimal(build_individual_lp(kad, "offline")),
        _solve_optimal(build_individual_lp(kad, "online")),
        arrival_model=ArrivalModel.kad,
    )


def group_values(
    inst: Instance, sol: LpSolution, side: str
) -> dict[str, float]:
    """Average utility of each group on one side at an LP solution."""
    x = sol.edge_values()
    if x.ndim == 2:
        mass = x.sum(axis=1)
    else:
        mass = x * np.array([e.p_e for e in inst.edges])

    if side == "offline":
        groups = offline_groups(inst)
        incident = edges_by_offline(inst)
        weight = np.array([e.w_off for e in inst.edges])
        denom = {g: len(m) for g, m in groups.items()}
    elif side == "online":
        groups = online_groups(inst)
        incident = edges_by_online(inst)
        weight = np.array([e.w_on for e in inst.edges])
        denom = {
            g: sum(expected_arrivals(inst, v) for v in m)
            for g, m in groups.items()
        }
    else:
        raise ValueError(f"unknown side {side!r}")

    return {
        g: float(
            sum(weight[e] * mass[e] for m in members for e in incident[m])
            / denom[g]
        )
        for g, members in groups.items()
    }
