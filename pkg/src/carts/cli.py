"""Command-line entry points: run one experiment, sweep a parameter, or run a
paired scheduler comparison. Exit code is nonzero on any invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from carts.harness import load_config, run_experiment, write_outputs


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_experiment(cfg)
    write_outputs(result, args.out)
    from carts.core import FrequencyGrid
    from carts.harness import build_traffic

    schedule = build_traffic(cfg, FrequencyGrid(cfg.n_rbs))
    schedule.to_csv(os.path.join(args.out, "traffic_schedule.csv"))
    print(json.dumps(result.summary(), indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    name, _, values = args.param.partition("=")
    if not values:
        raise SystemExit("expected --param name=v1,v2,...")
    cfg = load_config(args.config)
    if not hasattr(cfg, name):
        raise SystemExit(f"unknown config field {name!r}")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for v in values.split(","):
        value = type(getattr(cfg, name))(v)
        swept = dataclasses.replace(cfg, **{name: value})
        result = run_experiment(swept)
        subdir = os.path.join(args.out, f"{name}_{v}")
        write_outputs(result, subdir)
        s = result.summary()
        rows.append((v, s))
        print(f"{name}={v}: nmse_mean={s['nmse'].get('mean')} "
              f"rate={s['est_rate_hz']['mean']:.1f}/s")
    _write_bars(
        os.path.join(args.out, "nmse_bars.csv"),
        [(f"{name}={v}", s["scheduler"], s["nmse"].get("mean", "")) for v, s in rows],
    )
    _write_bars(
        os.path.join(args.out, "rate_bars.csv"),
        [(f"{name}={v}", s["scheduler"], s["est_rate_hz"]["mean"]) for v, s in rows],
    )
    return 0


def _cmd_compare(args) -> int:
    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for scheduler in args.schedulers.split(","):
        paired = dataclasses.replace(cfg, scheduler=scheduler.strip())
        result = run_experiment(paired)
        write_outputs(result, os.path.join(args.out, scheduler.strip()))
        s = result.summary()
        rows.append((scheduler.strip(), s))
        print(f"{scheduler}: nmse_mean={s['nmse'].get('mean')} "
              f"rate={s['est_rate_hz']['mean']:.1f}/s "
              f"tracking={s['tracking_m']['smoothed'].get('mean')}")
    _write_bars(
        os.path.join(args.out, "nmse_bars.csv"),
        [(s["traffic"]["kind"], name, s["nmse"].get("mean", "")) for name, s in rows],
    )
    with open(os.path.join(args.out, "comparison.json"), "w") as f:
        json.dump({name: s for name, s in rows}, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


def _write_bars(path, rows) -> None:
    with open(path, "w") as f:
        f.write("group,series,value\n")
        for group, series, value in rows:
            f.write(f"{group},{series},{value!r}\n" if isinstance(value, float)
                    else f"{group},{series},{value}\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="carts",
        description="Trace-driven SRS-triggering and CSI-stitching emulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one config field")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, help="e.g. n_ues=5,10,20,50")
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="paired scheduler comparison")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--schedulers", default="carts,periodic")
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=_cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
