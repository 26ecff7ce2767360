"""Command-line front end.

Four subcommands: ``run`` executes a named scenario (or one variant of it,
or an INI config file) and writes CSV artifacts plus a manifest with
content hashes; ``fit`` solves the step-curve amplitude for a switch
configuration; ``plot`` renders the CSVs as SVG charts; ``list-scenarios``
enumerates what can be run. The CLI computes nothing itself - every
number it emits comes from the library modules, formatted at fixed
precision so reruns produce byte-identical artifacts.

Exit codes: 0 success, 2 usage/config error, 3 simulation error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

from tbtcpsim.curvefit import CurveSpec, emit_switch_config, fit_pmax
from tbtcpsim.engine import SimulationError
from tbtcpsim.experiments import (
    ExperimentConfig,
    FlowSpec,
    WorkloadSpec,
    run_experiment,
)
from tbtcpsim.metrics import MetricsReport
from tbtcpsim.scenarios import named_scenarios
from tbtcpsim import svgplot

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SIM = 3

# reference operating points for the stock 138/550/180 KB ratios, used by
# `fit --table1` to print measured-vs-reference rows
REFERENCE_FITS = (
    (1, 0.7, 6.66),
    (2, 0.35, 1.67),
    (3, 0.25, 0.76),
    (4, 0.2, 0.49),
)
REFERENCE_SPEC = {"bdp_kb": 180.0, "l_kb": 138.0, "t_min_kb": 138.0, "t_max_kb": 550.0}

FCT_BUCKETS = (
    ("<10KB", 0, 10_000),
    ("10-100KB", 10_000, 100_000),
    ("100KB-1MB", 100_000, 1_000_000),
    (">=1MB", 1_000_000, None),
)


class UsageError(Exception):
    """Bad flags, bad config file, or an unknown scenario name."""


# --------------------------------------------------------------------------
# config file handling


def _field_types() -> dict[str, type]:
    # only scalar config fields are settable from INI; compound ones
    # (schedules, workload, rtt list) have their own sections or keys
    out = {}
    for f in fields(ExperimentConfig):
        if f.name in ("per_flow_rtts", "flow_schedule", "workload", "convergence_events"):
            continue
        out[f.name] = f.type
    return out


_BOOL_FIELDS = frozenset(("collect_queue_trace", "collect_flow_trace"))
_FLOAT_FIELDS = frozenset(
    ("beta", "g", "marking_l_pkts", "k_pkts", "t_min_pkts", "t_max_pkts",
     "p_max", "warmup_frac", "initial_cwnd", "initial_ssthresh", "alpha_init")
)
_STR_FIELDS = frozenset(("name", "algorithm", "marking", "bdp_rtt_choice"))
_OPTIONAL_FIELDS = frozenset(
    ("k_pkts", "t_min_pkts", "t_max_pkts", "p_max", "access_bps", "initial_ssthresh")
)


def _parse_field(section: str, key: str, raw: str):
    known = _field_types()
    if key not in known:
        raise UsageError(f"config error: [{section}] unknown field {key!r}")
    raw = raw.strip()
    if key in _OPTIONAL_FIELDS and raw.lower() in ("none", ""):
        return None
    try:
        if key in _STR_FIELDS:
            return raw
        if key in _BOOL_FIELDS:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        return int(raw)
    except ValueError:
        raise UsageError(
            f"config error: [{section}] field {key!r}: bad value {raw!r}"
        ) from None


def _parse_flow_section(name: str, section) -> FlowSpec:
    kwargs = {}
    for key in section:
        if key not in ("start_ns", "stop_ns", "size_bytes", "rtt_ns"):
            raise UsageError(f"config error: [{name}] unknown field {key!r}")
        raw = section[key].strip()
        if raw.lower() == "none":
            continue
        try:
            kwargs[key] = int(raw)
        except ValueError:
            raise UsageError(
                f"config error: [{name}] field {key!r}: bad value {raw!r}"
            ) from None
    return FlowSpec(**kwargs)


def load_config(path: Path) -> ExperimentConfig:
    """Parse an INI experiment description into an ExperimentConfig."""
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise UsageError(f"config error: {e}") from None
    except configparser.Error as e:
        # configparser errors carry the offending line in their message
        raise UsageError(f"config error in {path}: {e}") from None

    if not parser.has_section("experiment"):
        raise UsageError(f"config error in {path}: missing [experiment] section")

    kwargs = {}
    for key in parser["experiment"]:
        if key == "per_flow_rtts":
            raw = parser["experiment"][key]
            try:
                kwargs[key] = tuple(int(v.strip()) for v in raw.split(",") if v.strip())
            except ValueError:
                raise UsageError(
                    f"config error: [experiment] field 'per_flow_rtts': "
                    f"bad value {raw!r}"
                ) from None
        elif key == "convergence_events":
            raw = parser["experiment"][key]
            try:
                kwargs[key] = tuple(int(v.strip()) for v in raw.split(",") if v.strip())
            except ValueError:
                raise UsageError(
                    f"config error: [experiment] field 'convergence_events': "
                    f"bad value {raw!r}"
                ) from None
        else:
            kwargs[key] = _parse_field("experiment", key, parser["experiment"][key])

    if parser.has_section("workload"):
        wl = {}
        for key in parser["workload"]:
            if key not in ("load", "size_min", "size_split", "size_max", "short_weight"):
                raise UsageError(f"config error: [workload] unknown field {key!r}")
            raw = parser["workload"][key]
            try:
                wl[key] = float(raw) if key in ("load", "short_weight") else int(raw)
            except ValueError:
                raise UsageError(
                    f"config error: [workload] field {key!r}: bad value {raw!r}"
                ) from None
        kwargs["workload"] = WorkloadSpec(**wl)

    flow_sections = sorted(s for s in parser.sections() if s.startswith("flow."))
    if flow_sections:
        kwargs["flow_schedule"] = tuple(
            _parse_flow_section(s, parser[s]) for s in flow_sections
        )

    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise UsageError(f"config error in {path}: {e}") from None


def emit_example_config(config: ExperimentConfig) -> str:
    """Render a config as a commented INI example."""
    lines = [
        "# experiment description; omit any field to use its default",
        "# times are nanoseconds, rates are bits/s, queue values are packets",
        "[experiment]",
    ]
    skip = {"flow_schedule", "workload", "per_flow_rtts", "convergence_events"}
    for f in fields(ExperimentConfig):
        if f.name in skip:
            continue
        value = getattr(config, f.name)
        lines.append(f"{f.name} = {'none' if value is None else value}")
    lines.append(
        "per_flow_rtts = " + ", ".join(str(r) for r in config.per_flow_rtts)
    )
    if config.convergence_events:
        lines.append(
            "convergence_events = "
            + ", ".join(str(t) for t in config.convergence_events)
        )
    if config.workload is not None:
        w = config.workload
        lines += [
            "",
            "[workload]",
            f"load = {w.load}",
            f"size_min = {w.size_min}",
            f"size_split = {w.size_split}",
            f"size_max = {w.size_max}",
            f"short_weight = {w.short_weight}",
        ]
    if config.flow_schedule is not None:
        for i, fl in enumerate(config.flow_schedule):
            lines += ["", f"[flow.{i}]", f"start_ns = {fl.start_ns}"]
            if fl.stop_ns is not None:
                lines.append(f"stop_ns = {fl.stop_ns}")
            if fl.size_bytes is not None:
                lines.append(f"size_bytes = {fl.size_bytes}")
            if fl.rtt_ns is not None:
                lines.append(f"rtt_ns = {fl.rtt_ns}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# run


def _resolve_configs(target: str, paper: bool, seed: int | None) -> list[ExperimentConfig]:
    scen = named_scenarios()
    build_seed = seed if seed is not None else 1
    if target in scen:
        return list(scen[target].build(paper, build_seed))
    # a variant name picks one config out of a scenario family
    for family in scen.values():
        for cfg in family.build(paper, build_seed):
            if cfg.name == target:
                return [cfg]
    path = Path(target)
    if path.suffix == ".ini" or path.exists():
        cfg = load_config(path)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        return [cfg]
    names = ", ".join(sorted(scen))
    raise UsageError(
        f"unknown scenario {target!r}; valid scenario names: {names} "
        f"(or pass a variant name or an .ini config path)"
    )


def _config_hash(config: ExperimentConfig) -> str:
    # dataclass repr is deterministic field order; good enough as identity
    return hashlib.sha256(repr(config).encode()).hexdigest()[:16]


def _ms_list(times_ns) -> str:
    out = []
    for t in times_ns:
        out.append("never" if t is None else f"{t / 1e6:.1f}")
    return ";".join(out)


def _write_summary(path: Path, rows: list[tuple[ExperimentConfig, MetricsReport]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["name", "algorithm", "seed", "config_sha256", "utilization",
             "mean_queue_pkts", "max_queue_pkts", "jain_index",
             "convergence_ms"]
        )
        for cfg, rep in rows:
            w.writerow(
                [
                    rep.name,
                    rep.algorithm,
                    rep.seed,
                    _config_hash(cfg),
                    f"{rep.utilization:.4f}",
                    f"{rep.queue.mean_pkts:.2f}",
                    rep.queue.max_pkts,
                    "" if rep.jain is None else f"{rep.jain:.4f}",
                    _ms_list(rep.convergence_times_ns),
                ]
            )


# per-packet enq/deq rows are omitted from the CSV (the 100us sampler
# already captures depth dynamics and a multi-second run would emit
# millions of rows); the library report retains every event
_TRACE_CSV_EVENTS = ("sample", "mark", "drop")


def _write_queue_trace(path: Path, reports: list[MetricsReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "t_us", "depth_pkts", "event"])
        for rep in reports:
            for t_ns, depth, event in rep.queue_trace:
                if event in _TRACE_CSV_EVENTS:
                    w.writerow([rep.name, f"{t_ns / 1e3:.1f}", depth, event])


def _write_flow_trace(path: Path, reports: list[MetricsReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "t_us", "flow_id", "throughput_mbps"])
        for rep in reports:
            for sample in rep.throughput_windows:
                for fid in sorted(sample.bps):
                    w.writerow(
                        [
                            rep.name,
                            f"{sample.t_end_ns / 1e3:.1f}",
                            fid,
                            f"{sample.bps[fid] / 1e6:.3f}",
                        ]
                    )


def _write_fct(path: Path, reports: list[MetricsReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["size_bytes", "fct_us", "algorithm"])
        for rep in reports:
            for size, fct_ns in rep.fct_records:
                w.writerow([size, f"{fct_ns / 1e3:.1f}", rep.algorithm])


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_run(args) -> int:
    configs = _resolve_configs(args.target, args.paper, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    pairs = []
    for cfg in configs:
        if not cfg.collect_queue_trace:
            cfg = replace(cfg, collect_queue_trace=True)
        print(f"running {cfg.name} ...", flush=True)
        pairs.append((cfg, run_experiment(cfg)))

    reports = [rep for _, rep in pairs]
    artifacts = {
        "summary.csv": lambda p: _write_summary(p, pairs),
        "queue_trace.csv": lambda p: _write_queue_trace(p, reports),
        "flow_trace.csv": lambda p: _write_flow_trace(p, reports),
        "fct.csv": lambda p: _write_fct(p, reports),
    }
    hashes = {}
    for fname, writer in artifacts.items():
        path = out / fname
        writer(path)
        hashes[fname] = _sha256_file(path)

    manifest = {
        "target": args.target,
        "out_dir": args.out,
        "seed": args.seed,
        "scale": "paper" if args.paper else "fast",
        "artifacts": hashes,
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for cfg, rep in pairs:
        conv = _ms_list(rep.convergence_times_ns)
        print(
            f"  {rep.name}: utilization {rep.utilization:.4f}, "
            f"mean queue {rep.queue.mean_pkts:.2f} pkts"
            + (f", jain {rep.jain:.4f}" if rep.jain is not None else "")
            + (f", convergence_ms {conv}" if conv else "")
        )
    print(f"wrote {len(hashes) + 1} files to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    if args.table1:
        print("r  p_max   err      ref_p_max  ref_err")
        for r, ref_p, ref_e in REFERENCE_FITS:
            spec = CurveSpec(
                bdp=REFERENCE_SPEC["bdp_kb"],
                l=REFERENCE_SPEC["l_kb"],
                t_min=REFERENCE_SPEC["t_min_kb"],
                t_max=REFERENCE_SPEC["t_max_kb"],
                scale_r=r,
            )
            res = fit_pmax(spec)
            print(f"{r}  {res.p_max:.4f}  {res.err:.4f}   {ref_p:<9.2f}  {ref_e:.2f}")
        return EXIT_OK

    missing = [
        flag
        for flag, val in (
            ("--bdp-kb", args.bdp_kb),
            ("--tmin-kb", args.tmin_kb),
            ("--tmax-kb", args.tmax_kb),
        )
        if val is None
    ]
    if missing:
        raise UsageError(f"fit requires {', '.join(missing)} (or --table1)")
    try:
        spec = CurveSpec(
            bdp=args.bdp_kb,
            l=args.l_kb,
            t_min=args.tmin_kb,
            t_max=args.tmax_kb,
            scale_r=args.r,
        )
    except ValueError as e:
        raise UsageError(f"fit: {e}") from None
    res = fit_pmax(spec)
    print(f"p_max = {res.p_max:.6f}")
    print(f"err = {res.err:.6f}")
    record = emit_switch_config(spec, res)
    print("switch config:", json.dumps(record.to_config(), sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# plot


def _read_csv(path: Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise UsageError(
                    f"{path.name}: expected column {col!r}, found {header}"
                )
        return list(reader)


def _num(path: Path, row: dict[str, str], col: str) -> float:
    try:
        return float(row[col])
    except (ValueError, TypeError):
        raise UsageError(
            f"{path.name}: column {col!r}: bad numeric value {row[col]!r}"
        ) from None


def cmd_plot(args) -> int:
    out = Path(args.out)
    if not out.is_dir():
        raise UsageError(f"plot: {out} is not a directory (run `run` first)")
    written = []

    queue_path = out / "queue_trace.csv"
    if queue_path.exists():
        rows = _read_csv(queue_path, ("name", "t_us", "depth_pkts", "event"))
        by_name: dict[str, tuple[list[float], list[float]]] = {}
        for row in rows:
            if row["event"] != "sample":
                continue
            xs, ys = by_name.setdefault(row["name"], ([], []))
            xs.append(_num(queue_path, row, "t_us") / 1e3)
            ys.append(_num(queue_path, row, "depth_pkts"))
        series = [
            svgplot.Series(name, xs, ys) for name, (xs, ys) in sorted(by_name.items())
        ]
        svg = svgplot.line_chart(
            series, "Bottleneck queue depth", "time (ms)", "queue (packets)"
        )
        path = out / "queue_depth.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)

    flow_path = out / "flow_trace.csv"
    if flow_path.exists():
        rows = _read_csv(flow_path, ("name", "t_us", "flow_id", "throughput_mbps"))
        per_run: dict[str, dict[str, tuple[list[float], list[float]]]] = {}
        for row in rows:
            flows = per_run.setdefault(row["name"], {})
            xs, ys = flows.setdefault(f"flow {row['flow_id']}", ([], []))
            xs.append(_num(flow_path, row, "t_us") / 1e3)
            ys.append(_num(flow_path, row, "throughput_mbps"))
        if not per_run:
            svg = svgplot.line_chart(
                [], "Per-flow throughput", "time (ms)", "throughput (Mbps)"
            )
            path = out / "throughput.svg"
            path.write_text(svg, encoding="utf-8")
            written.append(path)
        for name, flows in sorted(per_run.items()):
            series = [
                svgplot.Series(label, xs, ys)
                for label, (xs, ys) in sorted(flows.items())
            ]
            svg = svgplot.line_chart(
                series, f"Per-flow throughput: {name}", "time (ms)",
                "throughput (Mbps)"
            )
            path = out / f"throughput-{name}.svg"
            path.write_text(svg, encoding="utf-8")
            written.append(path)

    fct_path = out / "fct.csv"
    if fct_path.exists():
        rows = _read_csv(fct_path, ("size_bytes", "fct_us", "algorithm"))
        algos: dict[str, list[list[float]]] = {}
        for row in rows:
            size = _num(fct_path, row, "size_bytes")
            fct = _num(fct_path, row, "fct_us")
            buckets = algos.setdefault(
                row["algorithm"], [[] for _ in FCT_BUCKETS]
            )
            for i, (_, lo, hi) in enumerate(FCT_BUCKETS):
                if size >= lo and (hi is None or size < hi):
                    buckets[i].append(fct)
                    break
        series = []
        for algo in sorted(algos):
            means = [
                sum(vals) / len(vals) if vals else 0.0 for vals in algos[algo]
            ]
            series.append(svgplot.Series(algo, [], means))
        svg = svgplot.bar_chart(
            [label for label, _, _ in FCT_BUCKETS],
            series,
            "Mean flow completion time by size",
            "flow size",
            "mean FCT (us)",
        )
        path = out / "fct_buckets.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)

    if not written:
        raise UsageError(f"plot: no known CSV files in {out}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# list-scenarios


def cmd_list(args) -> int:
    scen = named_scenarios()
    if args.example:
        if args.example not in scen:
            raise UsageError(
                f"unknown scenario {args.example!r}; valid: {', '.join(sorted(scen))}"
            )
        cfg = scen[args.example].build(args.paper, args.seed or 1)[0]
        print(emit_example_config(cfg), end="")
        return EXIT_OK
    for name in sorted(scen):
        family = scen[name]
        variants = family.build(False, 1)
        print(f"{name:22s} {len(variants):2d} run(s)  {family.description}")
    return EXIT_OK


# --------------------------------------------------------------------------


def _add_global_flags(parser: argparse.ArgumentParser, top: bool) -> None:
    # global flags are accepted both before and after the subcommand; the
    # subparser copies default to SUPPRESS so an omitted trailing flag does
    # not clobber a value parsed at the top level
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    parser.add_argument("--seed", type=int, default=d(None), help="seed override")
    parser.add_argument(
        "--out", default=d("out"), help="artifact directory (default: ./out)"
    )
    scale = parser.add_mutually_exclusive_group()
    scale.add_argument(
        "--fast", action="store_true", default=d(True),
        help="desk-scale runs, seconds per scenario (default)",
    )
    scale.add_argument(
        "--paper", action="store_true", default=d(False),
        help="original bandwidths and durations (hours; not for routine use)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tbtcpsim",
        description="packet-level congestion-control simulator and switch "
        "curve fitter",
    )
    _add_global_flags(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario, variant, or config file")
    p_run.add_argument("target", help="scenario name, variant name, or .ini path")
    _add_global_flags(p_run, top=False)
    p_run.set_defaults(fn=cmd_run)

    p_fit = sub.add_parser("fit", help="fit a step marking curve amplitude")
    p_fit.add_argument("--bdp-kb", type=float, default=None)
    p_fit.add_argument("--l-kb", type=float, default=0.0)
    p_fit.add_argument("--tmin-kb", type=float, default=None)
    p_fit.add_argument("--tmax-kb", type=float, default=None)
    p_fit.add_argument("--r", type=int, default=1, help="probability scale divisor")
    p_fit.add_argument(
        "--table1", action="store_true",
        help="fit r=1..4 at the stock testbed ratios and print reference rows",
    )
    _add_global_flags(p_fit, top=False)
    p_fit.set_defaults(fn=cmd_fit)

    p_plot = sub.add_parser("plot", help="render CSV artifacts as SVG charts")
    _add_global_flags(p_plot, top=False)
    p_plot.set_defaults(fn=cmd_plot)

    p_list = sub.add_parser("list-scenarios", help="show runnable scenarios")
    p_list.add_argument(
        "--example", default=None, metavar="NAME",
        help="print a commented example config for the named scenario",
    )
    _add_global_flags(p_list, top=False)
    p_list.set_defaults(fn=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        # invalid parameter combinations surface at topology build time
        print(f"error: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
