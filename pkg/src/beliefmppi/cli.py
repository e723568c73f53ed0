"""Command-line entry point: ``run``, ``verify`` and ``table``.

Exit codes: 0 on success, 1 when a verification fails, 2 on usage or
input errors, 3 when a verification was vacuous (its hypothesis never held).
"""
import argparse
import itertools
import json
import logging
import os
import sys

from .harness.config import VARIANTS, ExperimentConfig, load_config
from .harness.io import emit_outputs, table_from_log, write_metrics, METRICS, EPISODES
from .harness.trials import MetricsTable, run_trials

log = logging.getLogger("beliefmppi")

THM2_LAMBDAS = (0.5, 0.25, 0.1, 0.05, 0.01, 0.0)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=_seed, help="root seed")
    common.add_argument("--trials", type=int, help="trials per configuration (runs for thm3)")
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--beta-s", type=_floats, help="comma-separated safety levels")
    common.add_argument("--beta-c", type=_floats, help="comma-separated cost CVaR levels")
    common.add_argument("--lambda-r", type=_floats, help="comma-separated risk weights")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="beliefmppi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run seeded episodes and write logs")
    v = sub.add_parser("verify", parents=[common], help="check a safety or limit guarantee")
    v.add_argument("theorem", choices=("thm1", "thm2", "thm3"))
    v.add_argument("--horizon-steps", type=int, default=5, help="re-solves per run for thm3")
    v.add_argument("--n-validation", type=int, default=10_000, help="draws per set for thm1")
    t = sub.add_parser("table", parents=[common], help="aggregate an existing episode log")
    t.add_argument("logs", help="episodes.jsonl or a directory containing it")
    return p


def base_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["n_trials"] = args.trials
    if args.variant is not None:
        changes["variant"] = args.variant
    return cfg.replace(**changes) if changes else cfg


def sweep(cfg, args):
    """Configurations for every combination of the listed levels, labels unique."""
    bs = args.beta_s or [cfg.beta_s]
    bc = args.beta_c or [cfg.beta_c]
    lr = args.lambda_r or [cfg.lambda_r]
    out, seen = [], set()
    for b_s, b_c, l_r in itertools.product(bs, bc, lr):
        c = cfg.replace(beta_s=b_s, beta_c=b_c, lambda_r=l_r)
        if c.label() not in seen:
            seen.add(c.label())
            out.append(c)
    return out


def cmd_run(args):
    configs = sweep(base_config(args), args)
    table, runs = MetricsTable(), []
    for cfg in configs:
        t, records = run_trials(cfg)
        table.extend(t)
        runs.append((cfg.label(), records))
        row = t.rows[0]
        print(f"{row.label}: success {row.success_rate:.1f}% contact {row.contact_rate:.1f}% "
              f"max force {row.max_force:.3g} N over {row.n_trials} trials")
    if args.out:
        paths = emit_outputs(runs, table, args.out, configs, configs[0].seed)
        print(f"wrote {', '.join(sorted(paths.values()))}")
    return 0


def cmd_verify(args):
    from .harness import theorems as th

    cfg = base_config(args)
    reports = []
    if args.theorem == "thm1":
        for b in args.beta_s or [0.9, 0.95]:
            reports.append(th.verify_thm1(cfg.replace(beta_s=b), args.n_validation, seed=cfg.seed))
    elif args.theorem == "thm2":
        c = sweep(cfg, argparse.Namespace(beta_s=args.beta_s, beta_c=args.beta_c, lambda_r=None))[0]
        lams = args.lambda_r or THM2_LAMBDAS
        n = args.trials or 100
        batches = th.random_batches(c, n - 1, seed=cfg.seed) + [th.crossover_batch(c.N_p, c.effective_beta_c)]
        sub = [th.verify_thm2(b, lams, c) for b in batches]
        failed = [r for r in sub if r.status == "fail"]
        vacuous = [r for r in sub if r.status == "vacuous"]
        status = "fail" if failed else ("vacuous" if vacuous else "pass")
        reports.append(th.Report("thm2", status, {
            "batches": len(sub), "failed": len(failed), "vacuous": len(vacuous),
            "with_crossover": sum(r.details.get("crossover", False) for r in sub)}))
    else:
        for b in args.beta_s or [0.95]:
            reports.append(th.verify_thm3(cfg.replace(beta_s=b), T=args.horizon_steps,
                                          n_runs=args.trials or 400, seed=cfg.seed))
    for r in reports:
        print(r.summary())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"{args.theorem}.json")
        with open(path, "w") as fh:
            json.dump({"config_sha256": cfg.digest(), "seed": cfg.seed,
                       "reports": [r.to_dict() for r in reports]}, fh, indent=2, sort_keys=True)
        print(f"wrote {path}")
    if any(r.status == "fail" for r in reports):
        return 1
    if any(r.status == "vacuous" for r in reports):
        return 3
    return 0


def cmd_table(args):
    path = args.logs
    if os.path.isdir(path):
        path = os.path.join(path, EPISODES)
    head, _, table = table_from_log(path)
    print(",".join(table.columns))
    for row in table.rows:
        print(",".join(str(v) for v in row.as_list()))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_metrics(os.path.join(args.out, METRICS), table, head)
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "verify": cmd_verify, "table": cmd_table}
    try:
        return handlers[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"beliefmppi: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
