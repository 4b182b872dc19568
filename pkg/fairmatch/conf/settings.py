# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
from typing import Annotated

from pydantic import Field, PositiveInt
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..model import ReportFormat


class Settings(BaseSettings):
    """Global settings for the fairmatch front end.

    Settings can be changed by setting environment variables such as
    ``FAIRMATCH_SEED`` (case insensitive), or through the ``settings`` key of
    a command-line configuration file.
    """

    model_config = SettingsConfigDict(
        env_prefix="fairmatch_",
        validate_assignment=True,
        use_attribute_docstrings=True,
    )

    color: bool = True
    "Enable colorized terminal output"

    seed: int = 0
    "Root seed for every experiment"

    threads: PositiveInt = 1
    "Maximum number of worker processes"

    format: ReportFormat = ReportFormat.json
    "Output format for ratio reports"

    rho_simulations: PositiveInt = 1000
    "Simulations per round used to estimate TSF-KAD availability"

    lam: Annotated[float, Field(gt=0, le=1)] = 0.5
    "TSF-KAD attenuation"

    log_level: str = "WARNING"
    "Threshold for diagnostic messages on standard error"
