# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Manage models used for JSON I/O of matching instances and traces."""

from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveInt,
    model_validator,
)

Probability = Annotated[float, Field(ge=0, le=1)]

SCHEMA_VERSION = 1

WEIGHT_TOLERANCE = 1e-12


class FairmatchError(Exception):
    """Base class for errors raised by this package."""


class InstanceError(FairmatchError):
    """Instance is malformed or unsupported by the requested operation."""


class LpError(FairmatchError):
    """Benchmark linear program could not be solved to optimality."""


class PreconditionError(FairmatchError):
    """Input contract of an online algorithm was violated."""


class _Model(BaseModel):
    """Base settings for fairmatch models.

    Note that attribute docstrings require Pydantic 2.7 or higher.
    """

    model_config = ConfigDict(use_attribute_docstrings=True, frozen=True)


class ArrivalModel(Enum):
    """How online vertex types are drawn in each round."""

    kiid = "kiid"  # stationary p_v
    kad = "kad"  # per-round p_{v,t}


class Objective(Enum):
    """One of the three benchmark objectives."""

    operator = "operator"
    offline_fair = "offline_fair"
    online_fair = "online_fair"


class ReportFormat(str, Enum):
    json = "json"
    csv = "csv"


class OfflineVertex(_Model):
    id: NonNegativeInt
    "Index of the vertex in ``Instance.offline``"

    group: str
    "Group membership"

    patience: PositiveInt = 1
    "Number of failed probes tolerated over the whole horizon"


class OnlineType(_Model):
    id: NonNegativeInt
    "Index of the type in ``Instance.online``"

    group: str
    "Group membership"

    patience: PositiveInt = 1
    "Number of failed probes tolerated within the arrival round"

    p: Optional[Probability] = None
    "Stationary arrival probability (KIID)"

    p_t: Optional[list[Probability]] = None
    "Arrival probability for each round (KAD)"

    @model_validator(mode="after")
    def _check_arrival(self):
        if (self.p is None) == (self.p_t is None):
            raise ValueError("exactly one of 'p' and 'p_t' must be given")
        return self


class Edge(_Model):
    u: NonNegativeInt
    "Offline endpoint"

    v: NonNegativeInt
    "Online type endpoint"

    p_e: Probability = 1.0
    "Probability that a probe of this edge succeeds"

    w_op: NonNegativeFloat = 0.0
    "Operator utility"

    w_off: NonNegativeFloat = 0.0
    "Offline vertex utility"

    w_on: NonNegativeFloat = 0.0
    "Online vertex utility"


class Instance(_Model):
    """Three-sided matching problem: graph, utilities, and arrivals."""

    schema_version: Literal[1] = SCHEMA_VERSION

    horizon: PositiveInt
    "Number of rounds T"

    arrival_model: ArrivalModel

    offline: list[OfflineVertex]
    online: list[OnlineType]
    edges: list[Edge]

    groups: list[str]
    "Declared group identifiers, in tie-breaking order"

    metadata: dict[str, Union[float, str]] = {}
    "Provenance such as the utility shift applied during ingestion"


class Probe(_Model):
    edge: NonNegativeInt
    success: bool


class RoundEvent(_Model):
    t: NonNegativeInt
    "Round index, starting from zero"

    arrival: NonNegativeInt
    "Online type that arrived"

    solution: Optional[Objective] = None
    "Benchmark solution the algorithm sampled from, if any"

    probes: list[Probe] = []


class RunTrace(_Model):
    """One simulated episode of an online algorithm."""

    events: list[RoundEvent]

    realized_op_utility: float = 0.0

    realized_off_utility: dict[int, float]
    "Offline vertex index to realized utility"

    realized_on_utility: dict[int, float]
    "Round index to utility of that round's arrival"

    clamped: NonNegativeInt = 0
    "Probe distributions that had to be clamped (TSF-KAD)"


class Weights(_Model):
    """Probability of following each benchmark solution in a round."""

    alpha: Probability = 0.0
    "Weight of the operator solution"

    beta: Probability = 0.0
    "Weight of the offline-fairness solution"

    gamma: Probability = 0.0
    "Weight of the online-fairness solution"

    @model_validator(mode="after")
    def _check_sum(self):
        total = self.alpha + self.beta + self.gamma
        if total > 1 + WEIGHT_TOLERANCE:
            raise ValueError(f"weights sum to {total:.12g}, more than one")
        return self

    def cumulative(self) -> tuple[float, float, float]:
        """Thresholds for one uniform draw selecting a solution."""
        a = self.alpha
        return (a, a + self.beta, a + self.beta + self.gamma)


class Violation(_Model):
    """Broken instance invariant."""

    field: str
    rule: str
    detail: str = ""

    def __str__(self):
        return f"{self.field}: {self.rule}" + (
            f" ({self.detail})" if self.detail else ""
        )
