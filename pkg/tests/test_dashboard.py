"""Dashboard navigation over a populated and an empty run directory."""

from __future__ import annotations

import pandas as pd
import pytest
from textual.widgets import Button, DataTable, Sparkline, Static, TabbedContent

from continuum_forge.app import ForgeApp
from continuum_forge.screens.splash import SplashScreen, banner
from continuum_forge.workbench import Workbench


@pytest.fixture
def run_dir(tmp_path):
    bench = Workbench(tmp_path / "run")
    bench.write_csv("curve.csv", pd.DataFrame({
        "step": [10, 20, 30],
        "episode": [1, 2, 3],
        "reward": [-4.0, 1.0, 6.0],
        "moving_average": [-4.0, -1.5, 1.0],
    }))
    bench.write_json("stats.json", {"agent": "ppo", "steps": 30})
    bench.write_csv("comparison.csv", pd.DataFrame({
        "scheduler": ["default", "latency_greedy"],
        "replicas": [1, 1],
        "pods": [4, 4],
        "trials": [2, 2],
        "mean_d_msa": [320.0, 255.5],
        "std_d_msa": [10.0, 0.0],
        "mean_actions": [0.0, 0.0],
        "mean_fraction_moved": [0.0, 0.0],
    }))
    bench.write_csv("traffic-surge/series.csv", pd.DataFrame({
        "tick": [0, 1, 2],
        "true": [255.5, 255.5, 260.0],
        "observed": [250.0, 258.0, 262.0],
        "marker": ["", "threads:6", ""],
    }))
    bench.write_json("traffic-surge/summary.json", {"mean": 256.7, "slo_ms": 250, "fraction_under_slo": 0.33,
                                                     "spike_count": 0, "moving_average": [250.0, 254.0, 256.7]})
    bench.write_json("oracle.json", {"optimal_d_msa": 255.5, "best_placements": [], "feasible_count": 1,
                                     "enumerated": 1})
    bench.write_manifest("train", {"agent": "ppo"}, {"topology": "testbed6", "app": "chain"}, seed=1)
    return bench.root


def test_banner_is_figlet_text():
    text = banner()
    assert len(text.plain.splitlines()) > 1


async def test_nav_walks_every_section(run_dir):
    app = ForgeApp(run_dir, splash=False)
    async with app.run_test(size=(140, 45)) as pilot:
        assert app.active_section == "run"
        assert "train" in str(app.query_one("#run-status", Static).render())
        assert app.query_one("#nav-run", Button).has_class("active")

        await pilot.click("#nav-training")
        await pilot.pause()
        assert app.active_section == "training"
        assert app.query_one("#curve-reward", Sparkline).data == [-4.0, 1.0, 6.0]
        assert not app.query_one("#nav-run", Button).has_class("active")

        await pilot.press("f3")
        await pilot.pause()
        assert app.query_one("#compare-table", DataTable).row_count == 2

        await pilot.press("f4")
        await pilot.pause()
        assert app.query_one("#scenario-tabs", TabbedContent).active == "tab-traffic-surge"

        await pilot.press("f5")
        await pilot.pause()
        assert app.query_one("#report-tabs", TabbedContent).active == "tab-oracle"


async def test_empty_directory_shows_placeholders(tmp_path):
    app = ForgeApp(tmp_path, splash=False)
    async with app.run_test() as pilot:
        assert "no manifest" in str(app.query_one("#sidebar-status", Static).render())
        assert not app.query("#run-status")
        await pilot.press("f3")
        await pilot.pause()
        assert not app.query("#compare-table")
        await pilot.press("r")
        await pilot.pause()
        assert app.active_section == "compare"


async def test_splash_closes_on_any_key(run_dir):
    app = ForgeApp(run_dir)
    async with app.run_test() as pilot:
        await pilot.pause()
        assert isinstance(app.screen, SplashScreen)
        await pilot.press("x")
        await pilot.pause()
        assert not isinstance(app.screen, SplashScreen)
        assert app.active_section == "run"
