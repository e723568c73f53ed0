"""Episode logs, metrics tables and trace files.

Every file starts with one header line carrying the config hash and root
seed. Floats are written with ``repr`` precision so a log parses back to
the same values. Wall-clock timings go to their own file, which keeps the
other outputs byte-identical across reruns.
"""
from dataclasses import asdict
import csv
import hashlib
import json
import os

from .episode import EpisodeRecord
from .trials import METRIC_COLUMNS, MetricsTable, aggregate

EPISODES = "episodes.jsonl"
METRICS = "metrics.csv"
TRACES = "traces.csv"
TIMING = "timing.csv"

TRACE_COLUMNS = (
    "label", "seed", "t", "px", "py", "margin", "clearance_margin", "force_margin",
    "grasp_margin", "contact_force", "chosen_cvar_violation", "chosen_mean_cost", "ess",
)


def combined_digest(configs):
    """Hash identifying a list of configurations, in order."""
    h = hashlib.sha256()
    for cfg in configs:
        h.update(cfg.digest().encode())
    return h.hexdigest()


def header(configs, seed, failed=None):
    return {"config_sha256": combined_digest(configs), "seed": int(seed),
            "labels": [c.label() for c in configs], "failed": dict(failed or {})}


def _open(path, mode="w"):
    try:
        return open(path, mode, newline="")
    except OSError as exc:
        raise OSError(f"cannot open {path}: {exc}") from exc


def write_episodes(path, runs, head):
    """JSONL: a header, then per episode its step lines and one summary line."""
    with _open(path) as fh:
        fh.write(json.dumps({"type": "header", **head}, sort_keys=True) + "\n")
        for label, records in runs:
            for rec in records:
                for step in rec.steps:
                    line = {"type": "step", "label": label, "seed": rec.seed, **asdict(step)}
                    fh.write(json.dumps(line, sort_keys=True) + "\n")
                summary = {"type": "episode", **rec.to_dict(include_steps=False)}
                fh.write(json.dumps(summary, sort_keys=True) + "\n")


def read_episodes(path):
    """Parse an episode log back into ``(header, {label: [EpisodeRecord, ...]})``."""
    head, runs, pending = None, {}, {}
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                line = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from exc
            kind = line.pop("type", None)
            if kind == "header":
                head = line
            elif kind == "step":
                key = (line.pop("label"), line.pop("seed"))
                pending.setdefault(key, []).append(line)
            elif kind == "episode":
                key = (line["label"], line["seed"])
                rec = EpisodeRecord.from_dict({**line, "steps": pending.pop(key, [])})
                runs.setdefault(line["label"], []).append(rec)
            else:
                raise ValueError(f"{path}:{n}: unknown record type {kind!r}")
    return head, runs


def _comment(head):
    return f"# config_sha256={head['config_sha256']} seed={head['seed']}"


def write_metrics(path, table, head):
    with _open(path) as fh:
        fh.write(_comment(head) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in table.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_list()])


def read_metrics(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_traces(path, runs, head):
    with _open(path) as fh:
        fh.write(_comment(head) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for label, records in runs:
            for rec in records:
                for s in rec.steps:
                    d = s.diagnostics
                    w.writerow([label, rec.seed, s.t, repr(s.state[0]), repr(s.state[1]),
                                repr(s.margin), repr(s.clearance_margin), repr(s.force_margin),
                                repr(s.grasp_margin), repr(s.contact_force),
                                repr(d["chosen_cvar_violation"]), repr(d["chosen_mean_cost"]),
                                repr(s.ess)])


def write_timing(path, table, runs, head):
    with _open(path) as fh:
        fh.write(_comment(head) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "n_steps", "wall_time_ms_per_step"])
        steps = {label: sum(r.n_steps for r in recs) for label, recs in runs}
        for row in table.rows:
            w.writerow([row.label, steps.get(row.label, 0), repr(row.wall_time_ms)])


def emit_outputs(runs, table, out_dir, configs, seed):
    """Write all outputs for a sweep into `out_dir`.

    Parameters
    ----------
    runs : list of (label, list of EpisodeRecord)
    table : MetricsTable
    out_dir : str
    configs : list of ExperimentConfig, in sweep order
    seed : int
        Root seed of the sweep.

    Returns
    -------
    dict mapping file kind to path.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    head = header(configs, seed, {row.label: row.n_failed for row in table.rows})
    paths = {k: os.path.join(out_dir, name) for k, name in
             (("episodes", EPISODES), ("metrics", METRICS), ("traces", TRACES), ("timing", TIMING))}
    write_episodes(paths["episodes"], runs, head)
    write_metrics(paths["metrics"], table, head)
    write_traces(paths["traces"], runs, head)
    write_timing(paths["timing"], table, runs, head)
    return paths


def table_from_log(path):
    """Rebuild the metrics table from an episode log (timings are not logged)."""
    head, runs = read_episodes(path)
    table = MetricsTable()
    failed = (head or {}).get("failed", {})
    for label, records in runs.items():
        table.append(aggregate(records, label, failed.get(label, 0)))
    return head, runs, table
