# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0

import matplotlib
import numpy as np
import pytest
from numpy.testing import assert_allclose

from fairmatch import visualize
from fairmatch.experiment import AlgoConfig, ObjectiveRatio, RatioReport
from fairmatch.model import Objective

matplotlib.use("Agg")


def sweep_reports():
    result = []
    for alpha in (1.0, 0.0, 0.5):
        config = AlgoConfig(alpha=alpha, beta=(1 - alpha) / 2, gamma=0)
        result.append(
            RatioReport(
                config=config,
                trials=25,
                seed=0,
                objectives=[
                    ObjectiveRatio(
                        objective=obj,
                        empirical=alpha,
                        optimum=1.0 if obj is Objective.operator else 0.0,
                        ratio=alpha if obj is Objective.operator else None,
                        stderr=0.1,
                        ratio_stderr=0.1,
                    )
                    for obj in Objective
                ],
            )
        )
    return result


def test_plot_sweep():
    import matplotlib.pyplot as plt

    reports = sweep_reports()
    (fig, ax) = plt.subplots()
    try:
        result = visualize.plot_sweep(reports, ax)
        assert result["ax"] is ax
        assert set(result) == {
            "ax",
            "operator",
            "offline_fair",
            "online_fair",
            "operator_floor",
            "offline_fair_floor",
            "online_fair_floor",
        }
        # Points are sorted by alpha
        (x, y) = result["operator"].lines[0].get_data()
        assert_allclose(x, [0.0, 0.5, 1.0])
        assert_allclose(y, [0.0, 0.5, 1.0])
        (_, y) = result["online_fair"].lines[0].get_data()
        assert np.all(np.isnan(y))

        assert_allclose(
            result["operator_floor"].get_ydata(),
            np.array([0.0, 0.5, 1.0]) / (2 * np.e),
        )
        assert_allclose(
            result["offline_fair_floor"].get_ydata(),
            np.array([0.5, 0.25, 0.0]) / (2 * np.e),
        )
        assert ax.get_title() == "25 trials per point"
    finally:
        plt.close(fig)


def test_plot_without_floors():
    import matplotlib.pyplot as plt

    (fig, ax) = plt.subplots()
    try:
        result = visualize.plot_sweep(sweep_reports(), ax, floors=False)
        assert "operator_floor" not in result
    finally:
        plt.close(fig)

    with pytest.raises(ValueError):
        visualize.plot_sweep([])


def test_save_sweep_plot(tmp_path):
    path = visualize.save_sweep_plot(sweep_reports(), tmp_path / "sweep.png")
    assert path.exists()
    assert path.read_bytes()[:4] == b"\x89PNG"
