"""Gaussian-process beam tracking with overhead-penalized set expected improvement.

Modules
-------
beam_grid
    DFT beam dictionary over an azimuth x elevation grid.
channel_sim
    Synthetic drifting multipath channel and noisy RSRP reports.
gp_core
    Space-time GP over (slot, beam) with likelihood fitting.
acquisition
    Monte-Carlo set-EI and greedy beamset selection.
tracker
    The per-slot tracking loop and baseline policies.
harness / cli
    Batch experiments, aggregate tables, plots and the command line.
"""

__version__ = "0.1.0"

from .beam_grid import ArrayGeometry, AngleGrid, BeamGrid, table_grid
from .channel_sim import ChannelScenario, ScenarioParams, random_scenario
from .gp_core import GpModel, fit_hyperparameters, posterior_at_slot
from .acquisition import OverheadPenalty, choose_beamset, make_context
from .tracker import BoSettings, TrackerPolicy, run_episode

__all__ = [
    "ArrayGeometry",
    "AngleGrid",
    "BeamGrid",
    "table_grid",
    "ChannelScenario",
    "ScenarioParams",
    "random_scenario",
    "GpModel",
    "fit_hyperparameters",
    "posterior_at_slot",
    "OverheadPenalty",
    "choose_beamset",
    "make_context",
    "BoSettings",
    "TrackerPolicy",
    "run_episode",
]
