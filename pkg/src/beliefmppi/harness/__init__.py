"""Episodes, trial sweeps, guarantee checks and output files."""
from .config import ExperimentConfig, load_config
from .episode import EpisodeRecord, StepRecord, run_episode
from .io import emit_outputs, read_episodes
from .smoothing import savgol_smooth
from .theorems import Report, verify_thm1, verify_thm2, verify_thm3
from .trials import MetricsTable, run_trials

__all__ = [
    "ExperimentConfig",
    "load_config",
    "EpisodeRecord",
    "StepRecord",
    "run_episode",
    "emit_outputs",
    "read_episodes",
    "savgol_smooth",
    "Report",
    "verify_thm1",
    "verify_thm2",
    "verify_thm3",
    "MetricsTable",
    "run_trials",
]
