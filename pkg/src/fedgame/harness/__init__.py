"""Experiment harness: strict config parsing, orchestration of the four
experiment kinds, deterministic delimited outputs, and plot rendering."""

from .config import ExperimentConfig, parse_config, parse_config_text
from .experiments import run_experiment
from .plotdata import emit_plotdata
