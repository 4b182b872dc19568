# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
import contextlib
import json
import logging
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import typer

try:  # typer >= 0.26 vendors its own copy of click
    from typer._click.core import Context
    from typer._click.exceptions import Abort, ClickException, UsageError
except ImportError:  # pragma: no cover
    from click import Abort, ClickException, Context, UsageError
from pydantic import ValidationError
from rich import print as rprint
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from typing_extensions import Annotated

from .conf.settings import Settings
from .experiment import (
    AlgoConfig,
    Algorithm,
    RhoMode,
    ablation_configs,
    comparison_configs,
    emit_report,
    one_side_ignored_configs,
    parse_range,
    run_experiment,
    sweep_configs,
)
from .hardness import (
    make_hardness_group_instance,
    make_hardness_indiv_group_instance,
)
from .ingest import (
    IngestConfig,
    ingest_trips,
    read_trips_csv,
    synthesize_trips,
    write_trips_csv,
)
from .instance import (
    dump_instance,
    fragment_types,
    is_fragmented,
    load_instance,
    validate_instance,
)
from .lp import benchmarks, individual_benchmarks
from .model import (
    ArrivalModel,
    FairmatchError,
    Instance,
    InstanceError,
    LpError,
    PreconditionError,
    ReportFormat,
)

app = typer.Typer(pretty_exceptions_enable=False)

stderr = Console(stderr=True)

log = logging.getLogger(__name__)


@dataclass
class CliState:
    settings: Settings
    output: Optional[Path] = None

    seed: Optional[int] = None
    "Seed given explicitly on the command line or in the config file"


def load_settings(overrides: Optional[dict] = None) -> Settings:
    try:
        from .settings import settings

        if overrides:
            settings = Settings(**overrides)
    except ValidationError as e:
        rprint(
            "[bold red]Failed[/bold red] to load settings", e, file=sys.stderr
        )
        raise typer.Exit(1) from None

    return settings


def print_version(value: bool):
    if value:
        from . import __version__

        typer.echo(__version__)
        raise typer.Exit()


def _read_config(path: Optional[Path]) -> tuple[dict, dict]:
    """Split a JSON config file into per-command defaults and settings."""
    if path is None:
        return {}, {}
    data = json.loads(path.read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be an object")
    overrides = data.pop("settings", {})
    return data, overrides


def _state(ctx: typer.Context) -> CliState:
    return ctx.find_root().obj


def _emit(ctx: typer.Context, text: str, path: Optional[Path] = None):
    path = path or _state(ctx).output
    if path is None:
        typer.echo(text, nl=not text.endswith("\n"))
    else:
        path.write_text(text)
        log.info("Wrote %s", path)


def _load(path: Path, *, unit_success: bool = False) -> Instance:
    inst = load_instance(path)
    violations = validate_instance(inst, require_unit_success=unit_success)
    if violations:
        raise InstanceError(
            f"{path}: invalid instance\n  "
            + "\n  ".join(str(v) for v in violations)
        )
    return inst


@app.callback()
def common(
    ctx: typer.Context,
    config: Annotated[
        Optional[Path],
        typer.Option(
            "--config",
            exists=True,
            dir_okay=False,
            help="JSON file of per-command defaults and global settings",
        ),
    ] = None,
    seed: Annotated[Optional[int], typer.Option(help="Root seed")] = None,
    threads: Annotated[
        Optional[int], typer.Option(min=1, help="Maximum worker processes")
    ] = None,
    output: Annotated[
        Optional[Path], typer.Option(help="Write data here, not stdout")
    ] = None,
    format: Annotated[
        Optional[ReportFormat], typer.Option(help="Report format")
    ] = None,
    verbose: Annotated[
        bool, typer.Option("--verbose", "-v", help="Show debug messages")
    ] = False,
    version: Annotated[
        Optional[bool],
        typer.Option("--version", callback=print_version, is_eager=True),
    ] = None,
):
    """Fair three-sided online matching: benchmarks and simulations."""
    defaults, overrides = _read_config(config)
    given = {"seed": seed, "threads": threads, "format": format}
    for key, value in given.items():
        if value is not None:
            overrides[key] = value
    settings = load_settings(overrides)
    ctx.default_map = {**(ctx.default_map or {}), **defaults}
    ctx.obj = CliState(
        settings=settings, output=output, seed=overrides.get("seed")
    )
    stderr.no_color = not settings.color

    logging.basicConfig(
        level="DEBUG" if verbose else settings.log_level.upper(),
        format="%(message)s",
        handlers=[RichHandler(console=stderr, show_path=False)],
        force=True,
    )


Seed = Annotated[Optional[int], typer.Option(help="Root seed")]
Threads = Annotated[
    Optional[int], typer.Option(min=1, help="Maximum worker processes")
]
Output = Annotated[
    Optional[Path], typer.Option(help="Write data here, not stdout")
]
Format = Annotated[Optional[ReportFormat], typer.Option(help="Report format")]


def _override(
    ctx: typer.Context,
    *,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    output: Optional[Path] = None,
    format: Optional[ReportFormat] = None,
) -> CliState:
    """Apply global options repeated after the command name."""
    state = _state(ctx)
    given = {"seed": seed, "threads": threads, "format": format}
    update = {k: v for k, v in given.items() if v is not None}
    if update:
        state.settings = state.settings.model_copy(update=update)
    if seed is not None:
        state.seed = seed
    if output is not None:
        state.output = output
    return state


@app.command()
def bench(
    ctx: typer.Context,
    instance: Annotated[Path, typer.Argument(exists=True, dir_okay=False)],
    primal: Annotated[
        bool, typer.Option(help="Include the optimal edge variables")
    ] = False,
    individual: Annotated[
        bool, typer.Option(help="Add the individual-fairness optima")
    ] = False,
    output: Output = None,
):
    """Solve the benchmark linear programs of an instance."""
    _override(ctx, output=output)
    inst = _load(instance)
    if inst.arrival_model is ArrivalModel.kiid and not is_fragmented(inst):
        inst = fragment_types(inst)
    result = benchmarks(inst).to_dict(primal)
    if individual:
        ind = individual_benchmarks(inst)
        result["opt_off_individual"] = ind.opt_off
        result["opt_on_individual"] = ind.opt_on
    _emit(ctx, json.dumps(result, indent=1))


def _report(ctx: typer.Context, configs, instance: Path, trials: int):
    state = _state(ctx)
    inst = _load(
        instance,
        unit_success=any(c.algo is Algorithm.tsf_kad for c in configs),
    )
    reports = run_experiment(
        inst,
        configs,
        trials,
        seed=state.settings.seed,
        threads=state.settings.threads,
    )
    _emit(ctx, emit_report(reports, state.settings.format))
    return reports


def _kad_options(ctx, rho: RhoMode, rho_sims: Optional[int], lam):
    settings = _state(ctx).settings
    return {
        "rho": rho,
        "rho_simulations": rho_sims or settings.rho_simulations,
        "lam": settings.lam if lam is None else lam,
    }


Trials = Annotated[int, typer.Option(min=1, help="Simulated episodes")]
Rho = Annotated[RhoMode, typer.Option(help="TSF-KAD availability source")]
RhoSims = Annotated[
    Optional[int], typer.Option(min=1, help="Simulations per round for rho")
]
Lam = Annotated[Optional[float], typer.Option(help="TSF-KAD attenuation")]
Individual = Annotated[
    bool,
    typer.Option(
        help="Score individual fairness with TSF-KAD on the group reduction"
    ),
]


@app.command("run")
def run_command(
    ctx: typer.Context,
    instance: Annotated[Path, typer.Argument(exists=True, dir_okay=False)],
    algo: Annotated[Algorithm, typer.Option()] = Algorithm.tsf,
    alpha: float = 0.0,
    beta: float = 0.0,
    gamma: float = 0.0,
    trials: Trials = 100,
    rho: Rho = RhoMode.simulate,
    rho_sims: RhoSims = None,
    lam: Lam = None,
    individual: Individual = False,
    seed: Seed = None,
    threads: Threads = None,
    output: Output = None,
    format: Format = None,
):
    """Estimate competitive ratios of one algorithm setting."""
    _override(ctx, seed=seed, threads=threads, output=output, format=format)
    if individual:
        algo = Algorithm.tsf_kad
    config = AlgoConfig(
        algo=algo,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        individual=individual,
        **_kad_options(ctx, rho, rho_sims, lam),
    )
    _report(ctx, [config], instance, trials)


@app.command()
def sweep(
    ctx: typer.Context,
    instance: Annotated[Path, typer.Argument(exists=True, dir_okay=False)],
    alphas: Annotated[
        str, typer.Option(help="start:stop:step or comma-separated list")
    ] = "0:1:0.1",
    algo: Annotated[Algorithm, typer.Option()] = Algorithm.tsf,
    trials: Trials = 100,
    rho: Rho = RhoMode.simulate,
    rho_sims: RhoSims = None,
    lam: Lam = None,
    individual: Individual = False,
    plot: Annotated[
        Optional[Path], typer.Option(help="Save a ratio plot to this file")
    ] = None,
    seed: Seed = None,
    threads: Threads = None,
    output: Output = None,
    format: Format = None,
):
    """Sweep alpha with the remaining weight split evenly."""
    _override(ctx, seed=seed, threads=threads, output=output, format=format)
    if individual:
        algo = Algorithm.tsf_kad
    configs = sweep_configs(
        parse_range(alphas),
        algo,
        individual=individual,
        **_kad_options(ctx, rho, rho_sims, lam),
    )
    reports = _report(ctx, configs, instance, trials)
    if plot is not None:
        from .visualize import save_sweep_plot

        save_sweep_plot(reports, plot)


@app.command()
def compare(
    ctx: typer.Context,
    instance: Annotated[Path, typer.Argument(exists=True, dir_okay=False)],
    trials: Trials = 100,
    seed: Seed = None,
    threads: Threads = None,
    output: Output = None,
    format: Format = None,
):
    """Compare each greedy heuristic with TSF devoted to its objective."""
    _override(ctx, seed=seed, threads=threads, output=output, format=format)
    _report(ctx, comparison_configs(), instance, trials)


class AblationKind(str, Enum):
    matching = "matching"
    one_side = "one-side"


@app.command()
def ablation(
    ctx: typer.Context,
    instance: Annotated[Path, typer.Argument(exists=True, dir_okay=False)],
    kind: Annotated[AblationKind, typer.Option()] = AblationKind.matching,
    alpha: float = 0.5,
    beta: float = 0.25,
    gamma: float = 0.25,
    trials: Trials = 100,
    seed: Seed = None,
    threads: Threads = None,
    output: Output = None,
    format: Format = None,
):
    """Ignore match quality, or one side, and compare the ratios."""
    _override(ctx, seed=seed, threads=threads, output=output, format=format)
    if kind is AblationKind.matching:
        configs = ablation_configs(alpha, beta, gamma)
    else:
        configs = one_side_ignored_configs()
    _report(ctx, configs, instance, trials)


@app.command()
def ingest(
    ctx: typer.Context,
    trips: Annotated[Path, typer.Argument(exists=True, dir_okay=False)],
    config: Annotated[
        Optional[Path],
        typer.Option("--config", exists=True, help="Ingestion settings JSON"),
    ] = None,
    out: Annotated[
        Optional[Path], typer.Option("--out", "-o", help="Instance JSON")
    ] = None,
    seed: Seed = None,
):
    """Build a KIID instance from a trip-record CSV file.

    An explicit ``--seed`` replaces the seed of the ingestion settings.
    """
    state = _override(ctx, seed=seed)
    if config is None:
        cfg = IngestConfig()
    else:
        cfg = IngestConfig.model_validate_json(config.read_text())
    if state.seed is not None:
        cfg = cfg.model_copy(update={"seed": state.seed})
    inst = ingest_trips(read_trips_csv(trips), cfg)
    _write_instance(ctx, inst, out)


def _write_instance(ctx, inst: Instance, out: Optional[Path]):
    path = out or _state(ctx).output
    if path is None:
        typer.echo(inst.model_dump_json(indent=1))
    else:
        dump_instance(inst, path)


@app.command()
def synth(
    ctx: typer.Context,
    out: Annotated[Path, typer.Option("--out", "-o", help="Trip CSV file")],
    drivers: Annotated[int, typer.Option(min=1)] = 49,
    requests: Annotated[int, typer.Option(min=1)] = 172,
    spread: float = 0.01,
    seed: Seed = None,
):
    """Write synthetic city-like trip records."""
    state = _override(ctx, seed=seed)
    rng = np.random.default_rng(state.settings.seed)
    records = synthesize_trips(drivers, requests, rng, spread=spread)
    write_trips_csv(records, out)


class HardnessKind(str, Enum):
    group = "group"
    indiv = "indiv"


class Side(str, Enum):
    offline = "offline"
    online = "online"


@app.command()
def hardness(
    ctx: typer.Context,
    kind: Annotated[HardnessKind, typer.Option()] = HardnessKind.group,
    horizon: Annotated[int, typer.Option(min=3)] = 9,
    weight: Annotated[float, typer.Option("--L", help="Large weight")] = 100.0,
    side: Annotated[Side, typer.Option()] = Side.offline,
    out: Annotated[Optional[Path], typer.Option("--out", "-o")] = None,
):
    """Write one of the hardness fixtures."""
    if kind is HardnessKind.group:
        inst = make_hardness_group_instance(horizon)
    else:
        inst = make_hardness_indiv_group_instance(weight, side.value)
    _write_instance(ctx, inst, out)


def _fail(e: Exception):
    name = type(e).__name__
    stderr.print(f"[bold red]Failed[/bold red] ({name}): {escape(str(e))}")


def main(argv: Optional[list[str]] = None) -> int:
    """Run the command line, returning the process exit code.

    Validation problems exit with 1 and runtime failures with 2.
    """
    args = sys.argv[1:] if argv is None else list(argv)
    command = typer.main.get_command(app)
    if not args:
        with Context(
            command, info_name="fairmatch"
        ) as ctx, contextlib.redirect_stdout(sys.stderr):
            typer.echo(command.get_help(ctx), err=True)
        return 1

    try:
        rv = command.main(
            args=args, prog_name="fairmatch", standalone_mode=False
        )
    except UsageError as e:
        e.show()
        return 1
    except ClickException as e:
        e.show()
        return e.exit_code
    except Abort:
        return 1
    except (ValidationError, InstanceError, PreconditionError, ValueError) as e:
        _fail(e)
        return 1
    except (LpError, FairmatchError, OSError) as e:
        _fail(e)
        return 2
    return rv if isinstance(rv, int) else 0


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
