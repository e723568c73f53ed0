"""Randomised trial sweeps and their metrics table."""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.stats import fisher_exact

from ..rng import child_seed
from .episode import run_episode

log = logging.getLogger(__name__)

# column order follows the insertion-performance table; wall time lives in
# a separate timing file because it is not reproducible
METRIC_COLUMNS = (
    "label",
    "n_trials",
    "n_failed",
    "success_rate",
    "contact_rate",
    "mean_force",
    "max_force",
    "min_margin",
    "mean_cvar_violation",
    "final_distance",
)


def trial_seed(root_seed, index):
    """Seed of trial `index`; independent of how many trials are run."""
    return child_seed(root_seed, index)


@dataclass
class MetricsRow:
    label: str
    n_trials: int
    n_failed: int
    success_rate: float
    contact_rate: float
    mean_force: float
    max_force: float
    min_margin: float
    mean_cvar_violation: float
    final_distance: float
    wall_time_ms: float = float("nan")
    n_success: int = 0
    n_contact: int = 0

    def as_list(self):
        return [getattr(self, c) for c in METRIC_COLUMNS]

    def to_dict(self):
        return {c: getattr(self, c) for c in METRIC_COLUMNS}


@dataclass
class MetricsTable:
    """One row per configuration. Rates are percentages."""

    rows: list = field(default_factory=list)

    columns = METRIC_COLUMNS

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, label):
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    def append(self, row):
        self.rows.append(row)

    def extend(self, other):
        self.rows.extend(other.rows)


def aggregate(records, label, n_failed=0):
    """Summarise completed episodes into a :class:`MetricsRow`.

    The mean exterior force is averaged over every logged step of every
    episode, the maximum over all of them; margin, CVaR and distance columns
    are the worst, mean and mean episode values respectively.
    """
    n = len(records)
    if n == 0:
        nan = float("nan")
        return MetricsRow(label, 0, n_failed, nan, nan, nan, nan, nan, nan, nan)
    forces = np.concatenate([[s.contact_force for s in r.steps] for r in records])
    walls = np.concatenate([r.wall_times for r in records]) if any(r.wall_times for r in records) else []
    n_success = sum(r.success for r in records)
    n_contact = sum(r.contact for r in records)
    return MetricsRow(
        label=label,
        n_trials=n,
        n_failed=n_failed,
        success_rate=100.0 * n_success / n,
        contact_rate=100.0 * n_contact / n,
        mean_force=float(np.mean(forces)) if forces.size else 0.0,
        max_force=float(np.max(forces)) if forces.size else 0.0,
        min_margin=float(min(r.min_margin for r in records)),
        mean_cvar_violation=float(np.mean([r.mean_cvar_violation for r in records])),
        final_distance=float(np.mean([r.final_distance for r in records])),
        wall_time_ms=1e3 * float(np.mean(walls)) if len(walls) else float("nan"),
        n_success=int(n_success),
        n_contact=int(n_contact),
    )


def run_trials(cfg, n_trials=None, keep_records=True):
    """Run `n_trials` seeded episodes of one configuration.

    Trial ``i`` uses ``trial_seed(cfg.seed, i)``, so two configurations run
    with the same root seed face the same true slots and camera estimates.
    Episodes that raise are logged and left out of the aggregates.

    Returns
    -------
    table : MetricsTable with a single row
    records : list of EpisodeRecord (empty when `keep_records` is False)
    """
    n_trials = cfg.n_trials if n_trials is None else int(n_trials)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    records, failed = [], 0
    for i in range(n_trials):
        try:
            records.append(run_episode(cfg, trial_seed(cfg.seed, i)))
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failed += 1
            log.warning("trial %d of %s failed: %s", i, cfg.label(), exc)
    table = MetricsTable([aggregate(records, cfg.label(), failed)])
    return table, (records if keep_records else [])


def proportion_upper(k, n, z=1.6448536269514722):
    """One-sided Wilson upper bound for a binomial proportion."""
    if n == 0:
        return 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = p + z * z / (2 * n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return min(1.0, (centre + half) / denom)


def fisher_greater(k1, n1, k2, n2):
    """One-sided Fisher exact p-value for ``rate1 > rate2``."""
    table = [[k1, n1 - k1], [k2, n2 - k2]]
    return float(fisher_exact(table, alternative="greater")[1])
