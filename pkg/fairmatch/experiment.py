# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Run algorithms over many seeded trials and report competitive ratios."""

import json
import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Annotated, Optional, Union

import numpy as np
import pandas as pd
from pydantic import (
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveInt,
    model_validator,
)
from scipy.stats import spearmanr

from .algorithms import (
    OnlinePolicy,
    Tsf,
    TsfKad,
    estimate_rho,
    exact_rho,
    reduce_individual_to_group,
)
from .baselines import GreedyD, GreedyO, GreedyR
from .instance import (
    fragment_types,
    is_fragmented,
    rescore_trace,
    to_kad,
    with_unit_fairness_utilities,
)
from .lp import BenchmarkBundle, benchmarks, individual_benchmarks
from .model import (
    ArrivalModel,
    Instance,
    InstanceError,
    Objective,
    Probability,
    ReportFormat,
    WEIGHT_TOLERANCE,
    Weights,
    _Model,
)
from .objectives import Estimate, evaluate_objectives

__all__ = [
    "REPORT_COLUMNS",
    "AlgoConfig",
    "Algorithm",
    "ObjectiveRatio",
    "RatioReport",
    "RhoMode",
    "ablation_configs",
    "comparison_configs",
    "emit_report",
    "one_side_ignored_configs",
    "parse_range",
    "report_rows",
    "run_experiment",
    "sweep_configs",
    "trend_test",
]

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "algo",
    "alpha",
    "beta",
    "gamma",
    "objective",
    "empirical",
    "optimum",
    "ratio",
    "stderr",
]

NOT_APPLICABLE = "na"


class Algorithm(str, Enum):
    tsf = "tsf"
    tsf_kad = "tsf-kad"
    greedy_o = "greedy-o"
    greedy_r = "greedy-r"
    greedy_d = "greedy-d"


class RhoMode(str, Enum):
    exact = "exact"
    simulate = "simulate"


class AlgoConfig(_Model):
    """One algorithm setting to evaluate."""

    algo: Algorithm = Algorithm.tsf

    alpha: Probability = 0.0
    beta: Probability = 0.0
    gamma: Probability = 0.0

    lam: Annotated[float, Field(gt=0, le=1)] = 0.5
    "Attenuation applied by TSF-KAD"

    rho: RhoMode = RhoMode.simulate
    "How TSF-KAD obtains edge availability"

    rho_simulations: PositiveInt = 1000

    unit_utility_policy: bool = False
    "Plan with unit fairness utilities but score with the real ones"

    individual: bool = False
    "Score individual fairness through the group reduction (TSF-KAD only)"

    label: Optional[str] = None

    @model_validator(mode="after")
    def _check_config(self):
        total = self.alpha + self.beta + self.gamma
        if total > 1 + WEIGHT_TOLERANCE:
            raise ValueError(f"weights sum to {total:.12g}, more than one")
        if self.individual and self.algo is not Algorithm.tsf_kad:
            raise ValueError("individual fairness runs on tsf-kad only")
        return self

    @property
    def weights(self) -> Weights:
        return Weights(alpha=self.alpha, beta=self.beta, gamma=self.gamma)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.algo in (Algorithm.tsf, Algorithm.tsf_kad):
            prefix = self.algo.value
            if self.individual:
                prefix += "-individual"
            return (
                f"{prefix}({self.alpha:g},{self.beta:g},"
                f"{self.gamma:g})"
            )
        return self.algo.value


class ObjectiveRatio(_Model):
    objective: Objective
    empirical: float
    optimum: float

    ratio: Optional[float]
    "Empirical over optimum; absent when the optimum is zero"

    stderr: NonNegativeFloat
    "Standard error of the empirical value"

    ratio_stderr: Optional[NonNegativeFloat] = None

    individual: bool = False
    "Fairness is the worst single vertex (or round) rather than group"

    @property
    def label(self) -> str:
        if self.individual and self.objective is not Objective.operator:
            return self.objective.value.replace("_fair", "_individual")
        return self.objective.value


class RatioReport(_Model):
    config: AlgoConfig
    trials: PositiveInt
    seed: Optional[int]
    objectives: list[ObjectiveRatio]

    clamped_total: NonNegativeInt = 0
    "Probe distributions clamped over all trials"

    clamped_mean: NonNegativeFloat = 0.0

    def get(self, objective: Objective) -> ObjectiveRatio:
        (result,) = [o for o in self.objectives if o.objective is objective]
        return result


def _ratio(
    objective: Objective,
    est: Estimate,
    optimum: float,
    individual: bool = False,
):
    if optimum > 0:
        ratio, ratio_stderr = est.mean / optimum, est.stderr / optimum
    else:
        ratio, ratio_stderr = None, None
    return ObjectiveRatio(
        objective=objective,
        empirical=est.mean,
        optimum=optimum,
        ratio=ratio,
        stderr=est.stderr,
        ratio_stderr=ratio_stderr,
        individual=individual,
    )


def _make_policy(
    config: AlgoConfig,
    inst: Instance,
    bundle: BenchmarkBundle,
    rng: np.random.Generator,
) -> OnlinePolicy:
    algo = config.algo
    if algo is Algorithm.tsf:
        return Tsf(inst, bundle, config.weights)
    if algo is Algorithm.tsf_kad:
        if config.rho is RhoMode.exact:
            rho = exact_rho(inst, bundle, config.weights, config.lam)
        else:
            rho = estimate_rho(
                inst,
                bundle,
                config.weights,
                config.rho_simulations,
                rng,
                lam=config.lam,
            )
        return TsfKad(inst, bundle, config.weights, rho, config.lam)
    return {
        Algorithm.greedy_o: GreedyO,
        Algorithm.greedy_r: GreedyR,
        Algorithm.greedy_d: GreedyD,
    }[algo](inst)


def _run_config(
    config: AlgoConfig,
    inst: Instance,
    bundle: BenchmarkBundle,
    plan_inst: Instance,
    plan_bundle: BenchmarkBundle,
    trials: int,
    seq: np.random.SeedSequence,
    seed: Optional[int],
) -> RatioReport:
    """Simulate one configuration and compare with the true benchmarks."""
    log.debug("Starting %s with %d trials", config.name, trials)
    setup_seq, trial_seq = seq.spawn(2)
    policy = _make_policy(
        config, plan_inst, plan_bundle, np.random.default_rng(setup_seq)
    )
    traces = [
        policy.run(np.random.default_rng(s)) for s in trial_seq.spawn(trials)
    ]
    if config.unit_utility_policy:
        traces = [rescore_trace(inst, tr) for tr in traces]

    est = evaluate_objectives(inst, traces)
    clamped = sum(tr.clamped for tr in traces)
    if clamped:
        log.info("%s clamped %d probe distributions", config.name, clamped)
    if config.individual:
        off, on = est.offline_individual, est.online_individual
    else:
        off, on = est.offline_group, est.online_group
    indiv = config.individual
    report = RatioReport(
        config=config,
        trials=trials,
        seed=seed,
        objectives=[
            _ratio(Objective.operator, est.operator, bundle.opt_op),
            _ratio(Objective.offline_fair, off, bundle.opt_off, indiv),
            _ratio(Objective.online_fair, on, bundle.opt_on, indiv),
        ],
        clamped_total=clamped,
        clamped_mean=clamped / trials,
    )
    log.debug("Finished %s", config.name)
    return report


class _Prepared:
    """Instances and benchmarks for each arrival model, built on demand."""

    def __init__(self, inst: Instance):
        self.source = inst
        self._cache: dict = {}

    def get(self, config: AlgoConfig, unit: bool = False):
        """Instance and benchmarks that ``config`` plans with."""
        algo = config.algo
        kiid = self.source.arrival_model is ArrivalModel.kiid
        if algo is Algorithm.tsf and not kiid:
            raise InstanceError("TSF needs a KIID instance")
        key = (algo is Algorithm.tsf_kad, config.individual, unit)
        if key not in self._cache:
            inst = self.source
            if config.individual:
                inst = reduce_individual_to_group(inst)
            elif key[0]:
                inst = to_kad(inst)
            elif kiid and not is_fragmented(inst):
                inst = fragment_types(inst)
            if unit:
                inst = with_unit_fairness_utilities(inst)
            self._cache[key] = (inst, benchmarks(inst))
        return self._cache[key]

    def scoring(self, config: AlgoConfig):
        """Instance and benchmarks that ``config`` is scored against."""
        if not config.individual:
            return self.get(config)
        if "individual" not in self._cache:
            inst, _ = self.get(config)
            self._cache["individual"] = (
                inst,
                individual_benchmarks(self.source),
            )
        return self._cache["individual"]


def run_experiment(
    inst: Instance,
    configs: Sequence[AlgoConfig],
    trials: int,
    seed: Optional[int] = 0,
    threads: int = 1,
) -> list[RatioReport]:
    """Estimate competitive ratios of each configuration.

    KIID instances are fragmented before use, and TSF-KAD runs on the KAD
    form of the instance. Configurations scoring individual fairness run on
    the group reduction and are compared with the individual optima. Every
    (configuration, trial) pair draws from its own generator spawned from
    ``seed``, so results do not depend on ``threads``.
    """
    if trials < 1:
        raise ValueError(f"need at least one trial: {trials}")
    prepared = _Prepared(inst)
    jobs = []
    seqs = np.random.SeedSequence(seed).spawn(len(configs))
    for config, seq in zip(configs, seqs):
        run_inst, bundle = prepared.scoring(config)
        plan_inst, plan_bundle = prepared.get(
            config, config.unit_utility_policy
        )
        jobs.append(
            (config, run_inst, bundle, plan_inst, plan_bundle)
            + (trials, seq, seed)
        )

    if threads <= 1 or len(jobs) <= 1:
        return [_run_config(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(_run_config, *zip(*jobs)))


def parse_range(text: str) -> list[float]:
    """Parse ``start:stop:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (float(s) for s in text.split(":"))
        except ValueError:
            raise ValueError(f"expected start:stop:step: {text!r}") from None
        if step <= 0 or stop < start:
            raise ValueError(f"empty range {text!r}")
        count = int(round((stop - start) / step)) + 1
        return [round(x, 12) for x in np.linspace(start, stop, count)]
    return [float(s) for s in text.split(",") if s.strip()]


def sweep_configs(
    alphas: Sequence[float],
    algo: Algorithm = Algorithm.tsf,
    **kwargs,
) -> list[AlgoConfig]:
    """Configurations that split the weight left by alpha evenly."""
    return [
        AlgoConfig(
            algo=algo, alpha=a, beta=(1 - a) / 2, gamma=(1 - a) / 2, **kwargs
        )
        for a in alphas
    ]


def comparison_configs(**kwargs) -> list[AlgoConfig]:
    """Each greedy heuristic next to TSF devoted to the matching objective."""
    return [
        AlgoConfig(algo=Algorithm.greedy_o, **kwargs),
        AlgoConfig(algo=Algorithm.tsf, alpha=1.0, **kwargs),
        AlgoConfig(algo=Algorithm.greedy_d, **kwargs),
        AlgoConfig(algo=Algorithm.tsf, beta=1.0, **kwargs),
        AlgoConfig(algo=Algorithm.greedy_r, **kwargs),
        AlgoConfig(algo=Algorithm.tsf, gamma=1.0, **kwargs),
    ]


def one_side_ignored_configs(**kwargs) -> list[AlgoConfig]:
    return [
        AlgoConfig(alpha=0.5, beta=0.0, gamma=0.5, **kwargs),
        AlgoConfig(alpha=0.5, beta=0.5, gamma=0.0, **kwargs),
        AlgoConfig(alpha=0.0, beta=0.5, gamma=0.5, **kwargs),
    ]


def ablation_configs(
    alpha: float = 0.5, beta: float = 0.25, gamma: float = 0.25, **kwargs
) -> list[AlgoConfig]:
    """Utility-aware TSF and the same weights planned on unit utilities."""
    w = {"alpha": alpha, "beta": beta, "gamma": gamma}
    return [
        AlgoConfig(**w, **kwargs),
        AlgoConfig(**w, unit_utility_policy=True, label="matching", **kwargs),
    ]


def trend_test(
    reports: Sequence[RatioReport], objective: Objective = Objective.operator
) -> tuple[float, float]:
    """One-sided Spearman test that the ratio increases with alpha."""
    pairs = [
        (r.config.alpha, r.get(objective).ratio)
        for r in reports
        if r.get(objective).ratio is not None
    ]
    if len(pairs) < 3:
        raise ValueError("need at least three ratios for a trend test")
    alphas, ratios = zip(*pairs)
    result = spearmanr(alphas, ratios, alternative="greater")
    return float(result.statistic), float(result.pvalue)


def report_rows(
    reports: Sequence[RatioReport],
) -> list[dict[str, Union[str, float]]]:
    rows = []
    for r in reports:
        for o in r.objectives:
            rows.append(
                {
                    "algo": r.config.name,
                    "alpha": r.config.alpha,
                    "beta": r.config.beta,
                    "gamma": r.config.gamma,
                    "objective": o.label,
                    "empirical": o.empirical,
                    "optimum": o.optimum,
                    "ratio": NOT_APPLICABLE if o.ratio is None else o.ratio,
                    "stderr": o.stderr,
                }
            )
    return rows


def emit_report(
    reports: Sequence[RatioReport],
    fmt: ReportFormat = ReportFormat.json,
    path: Optional[Path] = None,
) -> str:
    """Render reports as CSV or JSON rows, optionally writing them to a file."""
    if not reports:
        raise ValueError("no reports to emit")
    rows = report_rows(reports)
    if fmt is ReportFormat.csv:
        text = pd.DataFrame(rows, columns=REPORT_COLUMNS).to_csv(index=False)
    else:
        text = json.dumps(rows, indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
