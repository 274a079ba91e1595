"""Command-line entry point.

Verbs: fetch-registry, simulate, compare, sweep, validate. Exit codes are a
stable contract: 0 success, 1 partial failure (some sweep runs failed), 2
usage or configuration error.

Overrides: ``LAYERSCHED_REGISTRY`` replaces the scenario's registry URL,
``LAYERSCHED_OUT`` replaces the output directory; flags beat both. All file
outputs are deterministic for a given scenario and seeds.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import (
    CacheCorrupt,
    ComparisonError,
    DigestSizeConflict,
    LayerSchedError,
    RegistryUnavailable,
    ScenarioError,
    TraceCorrupt,
    UnknownImage,
)
from .model import ImageRef, LayerCatalog
from .registry import RegistryConfig, refresh_cache
from .scenario import (
    ScenarioFile,
    SchedulerEntry,
    build_scenario,
    parse_scenario_file,
    resolve_catalog,
)
from .simulator import (
    DELTA_METRICS,
    _pct_delta,
    run,
    write_report_json,
    write_steps_csv,
)
from .scoring import MB
from .workload import load_trace

ENSEMBLE_CSV_HEADER = ["scheduler", "seed", "total_download_bytes",
                       "total_download_seconds", "mean_cluster_std",
                       "total_pods", "unschedulable_count"]

_AGGREGATE_KEYS = ENSEMBLE_CSV_HEADER[2:]


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", label)


def _out_dir(args, sfile: ScenarioFile) -> Path:
    out = args.out or os.environ.get("LAYERSCHED_OUT") or str(sfile.base_dir / sfile.output)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _registry_override(args) -> str | None:
    return getattr(args, "registry", None) or os.environ.get("LAYERSCHED_REGISTRY")


def _ensemble(
    sfile: ScenarioFile,
    catalog: LayerCatalog,
    entries: list[SchedulerEntry],
    seeds: list[int],
    jobs: int,
    bandwidth_override: int | None = None,
    node_count: int | None = None,
) -> dict:
    """Run every (scheduler, seed) leg and fold into per-scheduler means.

    Legs are independent pure runs, so the pool changes nothing but wall
    time; results are re-ordered deterministically afterwards.
    """
    legs = [(entry, seed) for entry in entries for seed in seeds]

    def one(leg):
        entry, seed = leg
        scenario = build_scenario(sfile, catalog, entry, seed,
                                  bandwidth_override=bandwidth_override,
                                  node_count=node_count)
        return run(scenario).aggregates()

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(one, legs))
    by_leg = {(entry.label, seed): agg for (entry, seed), agg in zip(legs, outcomes)}

    results: dict[str, dict] = {}
    for entry in entries:
        per_seed = [{"seed": seed, **by_leg[(entry.label, seed)]} for seed in seeds]
        mean = {
            key: sum(row[key] for row in per_seed) / len(per_seed)
            for key in _AGGREGATE_KEYS
        }
        results[entry.label] = {"per_seed": per_seed, "mean": mean}

    reference = "default" if "default" in results else entries[0].label
    ref_mean = results[reference]["mean"]
    deltas = {
        label: {
            metric: _pct_delta(data["mean"][metric], ref_mean[metric])
            for metric in DELTA_METRICS
        }
        for label, data in results.items()
    }
    return {
        "reference": reference,
        "seeds": list(seeds),
        "schedulers": [entry.label for entry in entries],
        "results": results,
        "deltas_pct": deltas,
    }


def _write_ensemble_csv(table: dict, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(ENSEMBLE_CSV_HEADER)
        for label in table["schedulers"]:
            data = table["results"][label]
            for row in data["per_seed"]:
                writer.writerow([label, row["seed"]] +
                                [_fmt_cell(row[k]) for k in _AGGREGATE_KEYS])
            writer.writerow([label, "mean"] +
                            [_fmt_cell(data["mean"][k]) for k in _AGGREGATE_KEYS])


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _print_ensemble(table: dict, heading: str) -> None:
    print(heading)
    print(f"  {'scheduler':<20}{'download_MB':>14}{'download_s':>13}"
          f"{'mean_STD':>11}{'pods':>7}{'unsched':>9}")
    for label in table["schedulers"]:
        mean = table["results"][label]["mean"]
        print(f"  {label:<20}"
              f"{mean['total_download_bytes'] / MB:>14.1f}"
              f"{mean['total_download_seconds']:>13.1f}"
              f"{mean['mean_cluster_std']:>11.4f}"
              f"{mean['total_pods']:>7.1f}"
              f"{mean['unschedulable_count']:>9.1f}")
    reference = table["reference"]
    for label in table["schedulers"]:
        if label == reference:
            continue
        delta = table["deltas_pct"][label]["total_download_bytes"]
        if delta is not None:
            print(f"  {label} vs {reference}: download {delta:+.1f}%")


def cmd_fetch_registry(args) -> int:
    url = args.registry or os.environ.get("LAYERSCHED_REGISTRY")
    if not url:
        print("error: no registry URL (use --registry or LAYERSCHED_REGISTRY)",
              file=sys.stderr)
        return 2
    config = RegistryConfig(base_url=url, cache_path=args.out,
                            poll_interval=args.poll or 10.0)

    def refresh_and_report() -> None:
        snapshot = refresh_cache(config)
        for warning in snapshot.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        state = "stale" if snapshot.stale else "fresh"
        print(f"{len(snapshot.lists)} images ({state}) -> {args.out}")

    if args.poll is None:
        refresh_and_report()
        return 0
    try:
        while True:
            try:
                refresh_and_report()
            except RegistryUnavailable as exc:
                print(f"warning: {exc}; retrying", file=sys.stderr)
            time.sleep(args.poll)
    except KeyboardInterrupt:
        return 0


def cmd_simulate(args) -> int:
    sfile = parse_scenario_file(args.scenario)
    catalog = resolve_catalog(sfile, registry_url=_registry_override(args))
    entries = {entry.label: entry for entry in sfile.schedulers}
    label = args.scheduler or sfile.schedulers[0].label
    if label not in entries:
        raise ScenarioError("schedulers",
                            f"no scheduler labelled {label!r} in {args.scenario}")
    seed = args.seed if args.seed is not None else sfile.seeds[0]
    scenario = build_scenario(sfile, catalog, entries[label], seed)
    report = run(scenario)

    out = _out_dir(args, sfile)
    stem = f"simulate_{_safe_name(label)}_seed{seed}"
    write_report_json(report, out / f"{stem}.json")
    write_steps_csv(report, out / f"{stem}.csv")

    agg = report.aggregates()
    print(f"{label} seed {seed}: "
          f"{agg['total_download_bytes'] / MB:.1f} MB downloaded in "
          f"{agg['total_download_seconds']:.1f} s, mean STD "
          f"{agg['mean_cluster_std']:.4f}, {agg['total_pods']} pods placed, "
          f"{agg['unschedulable_count']} unschedulable")
    print(f"wrote {out / (stem + '.json')} and {out / (stem + '.csv')}")
    return 0


def cmd_compare(args) -> int:
    sfile = parse_scenario_file(args.scenario)
    catalog = resolve_catalog(sfile, registry_url=_registry_override(args))
    table = _ensemble(sfile, catalog, sfile.schedulers, sfile.seeds, args.jobs)
    out = _out_dir(args, sfile)
    _write_json(table, out / "compare.json")
    _write_ensemble_csv(table, out / "compare.csv")
    _print_ensemble(table, f"compare over seeds {sfile.seeds}:")
    print(f"wrote {out / 'compare.json'} and {out / 'compare.csv'}")
    return 0


def cmd_sweep(args) -> int:
    sfile = parse_scenario_file(args.scenario)
    catalog = resolve_catalog(sfile, registry_url=_registry_override(args))
    if args.param == "bandwidth":
        points = sfile.sweeps.bandwidth
        if not points:
            raise ScenarioError("sweeps.bandwidth", "no sweep points configured")
        overrides = [{"bandwidth_override": value} for value in points]
    else:
        points = sfile.sweeps.node_count
        if not points:
            raise ScenarioError("sweeps.node_count", "no sweep points configured")
        overrides = [{"node_count": value} for value in points]

    out = _out_dir(args, sfile)
    summary_points = []
    failures = []
    for value, override in zip(points, overrides):
        stem = f"sweep_{args.param}_{value}"
        try:
            table = _ensemble(sfile, catalog, sfile.schedulers, sfile.seeds,
                              args.jobs, **override)
        except LayerSchedError as exc:
            failures.append(f"{args.param}={value}: {exc}")
            print(f"error: {args.param}={value}: {exc}", file=sys.stderr)
            summary_points.append({"value": value, "error": str(exc)})
            continue
        _write_json(table, out / f"{stem}.json")
        _write_ensemble_csv(table, out / f"{stem}.csv")
        _print_ensemble(table, f"{args.param} = {value}:")
        summary_points.append({
            "value": value,
            "means": {label: table["results"][label]["mean"]
                      for label in table["schedulers"]},
            "deltas_pct": table["deltas_pct"],
        })

    summary = {"param": args.param, "points": summary_points,
               "failures": failures}
    _write_json(summary, out / f"sweep_{args.param}_summary.json")
    print(f"wrote {out / f'sweep_{args.param}_summary.json'}")
    return 1 if failures else 0


def cmd_validate(args) -> int:
    sfile = parse_scenario_file(args.scenario)
    if sfile.catalog_source.registry_url is not None and not args.fetch:
        print(f"{args.scenario}: structure OK "
              f"(live registry catalog not fetched; pass --fetch to check)")
        return 0
    catalog = resolve_catalog(sfile, registry_url=_registry_override(args))

    workload = sfile.workload
    if workload.kind == "random" and workload.image_weights:
        for key in workload.image_weights:
            if ImageRef.parse(key) not in catalog.images:
                raise ScenarioError("workload.images", f"image {key!r} not in catalog")
    if workload.kind == "trace_file":
        for task in load_trace(sfile.base_dir / workload.trace_path):
            if task.image not in catalog.images:
                raise ScenarioError("workload.trace_file",
                                    f"image {task.image.key!r} not in catalog")

    for entry in sfile.schedulers:
        build_scenario(sfile, catalog, entry, sfile.seeds[0])
    for value in sfile.sweeps.bandwidth:
        build_scenario(sfile, catalog, sfile.schedulers[0], sfile.seeds[0],
                       bandwidth_override=value)
    for value in sfile.sweeps.node_count:
        build_scenario(sfile, catalog, sfile.schedulers[0], sfile.seeds[0],
                       node_count=value)

    print(f"{args.scenario}: OK ({len(sfile.nodes)} nodes, "
          f"{len(catalog.images)} images, "
          f"{len(sfile.schedulers)} schedulers, seeds {sfile.seeds})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layersched",
        description="Layer-aware container scheduling: registry metadata "
                    "fetcher and cluster scheduling simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fetch = sub.add_parser("fetch-registry",
                           help="write or refresh a registry metadata cache")
    fetch.add_argument("--registry", help="registry base URL "
                       "(default: LAYERSCHED_REGISTRY)")
    fetch.add_argument("--out", default="cache.json",
                       help="cache file path (default: %(default)s)")
    fetch.add_argument("--poll", nargs="?", type=float, const=10.0, default=None,
                       metavar="SECONDS",
                       help="watch mode: refresh every SECONDS (default 10) "
                            "until interrupted")
    fetch.set_defaults(func=cmd_fetch_registry)

    def common(cmd):
        cmd.add_argument("scenario", help="scenario file (JSON)")
        cmd.add_argument("--out", help="output directory "
                         "(default: scenario 'output' or LAYERSCHED_OUT)")
        cmd.add_argument("--registry", help="override the scenario registry URL")
        cmd.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                         help="parallel runs (default: logical CPUs)")

    sim = sub.add_parser("simulate", help="run one scheduler once")
    common(sim)
    sim.add_argument("--scheduler", help="scheduler label from the scenario "
                     "(default: first)")
    sim.add_argument("--seed", type=int, help="seed (default: first of the "
                     "scenario's seeds)")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare",
                          help="run all schedulers over all seeds and tabulate")
    common(cmp_)
    cmp_.set_defaults(func=cmd_compare)

    sweep = sub.add_parser("sweep", help="repeat compare per sweep point")
    common(sweep)
    sweep.add_argument("--param", choices=("bandwidth", "nodes"), required=True,
                       help="which sweep axis from the scenario to walk")
    sweep.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="check a scenario file and exit")
    val.add_argument("scenario", help="scenario file (JSON)")
    val.add_argument("--registry", help="override the scenario registry URL")
    val.add_argument("--fetch", action="store_true",
                     help="also fetch a live-registry catalog to validate it")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, CacheCorrupt, RegistryUnavailable, UnknownImage,
            TraceCorrupt, DigestSizeConflict, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
