"""Command-line interface.

Exit codes: 0 success, 1 runtime or calculation failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, kernels
from .calcs import UnknownCalculationError, build_calculation
from .engine import Engine
from .errors import FramepostError
from .framearc import validate_manifest
from .model import AXES, reduce_max, slice_axis
from .plotdoc import PLOT_TYPES, Presentation, edit_presentation, make_plot, read, restore
from .render import render
from .scheduler import format_plan, planned_bytes
from .synth import SynthConfig, generate

log = logging.getLogger("framepost")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
REPORT_NAME = "run_report.json"


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# run configuration

@dataclass
class CalcEntry:
    calc_id: str
    kind: str
    params: dict


@dataclass
class PlotRequest:
    name: str
    calc: str
    plot_type: str
    result: str | None = None
    reduce: tuple[str, ...] = ()
    slices: tuple[tuple[str, int], ...] = ()
    args: dict = field(default_factory=dict)
    presentation: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    datasets: list[Path]
    output: Path
    calcs: list[CalcEntry]
    plots: list[PlotRequest]
    threads: int = 1
    pinned_timestamp: str | None = None
    revision: str | None = None
    dry_run: bool = False


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    return text


def _pair(text: str, what: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{what} must be two comma-separated numbers, got {text!r}") from None
    return lo, hi


_PRESENTATION_KEYS = {"title", "colormap_id", "marker_size", "line_width", "grid_lines"}
_LIMIT_KEYS = {"xlim": "x", "ylim": "y", "clim": "c"}


def presentation_from_options(opts: dict, what: str) -> dict:
    out: dict = {}
    for key, value in opts.items():
        if key in _LIMIT_KEYS:
            out.setdefault("axis_limits", {})[_LIMIT_KEYS[key]] = _pair(value, f"{what}: {key}")
        elif key == "title" or key == "colormap_id":
            out[key] = value
        elif key in ("marker_size", "line_width"):
            try:
                out[key] = float(value)
            except ValueError:
                raise ConfigError(f"{what}: {key} must be a number") from None
        elif key == "grid_lines":
            v = _scalar(value)
            if not isinstance(v, bool):
                raise ConfigError(f"{what}: grid_lines must be true or false")
            out[key] = v
    try:
        Presentation(**out)
    except FramepostError as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    return out


def load_config(path) -> RunConfig:
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = path.parent
    if not cp.has_section("run"):
        raise ConfigError(f"{path}: missing [run] section")
    run = cp["run"]
    unknown = set(run) - {"dataset", "output", "threads", "pinned_timestamp", "revision"}
    if unknown:
        raise ConfigError(f"{path}: unknown [run] keys: {', '.join(sorted(unknown))}")
    if "dataset" not in run or "output" not in run:
        raise ConfigError(f"{path}: [run] needs 'dataset' and 'output'")
    datasets = [base / p.strip() for p in run["dataset"].replace("\n", ",").split(",") if p.strip()]
    try:
        threads = int(run.get("threads", "1"))
    except ValueError:
        raise ConfigError(f"{path}: threads must be an integer") from None

    calcs, plots = [], []
    for section in cp.sections():
        if section == "run":
            continue
        kind, _, name = section.partition(" ")
        name = name.strip()
        opts = dict(cp[section])
        if kind == "calc" and name:
            if "type" not in opts:
                raise ConfigError(f"[{section}] needs a 'type'")
            ctype = opts.pop("type")
            calcs.append(CalcEntry(name, ctype, {k: _scalar(v) for k, v in opts.items()}))
        elif kind == "plot" and name:
            for key in ("calc", "type"):
                if key not in opts:
                    raise ConfigError(f"[{section}] needs a '{key}'")
            if opts["type"] not in PLOT_TYPES:
                raise ConfigError(
                    f"[{section}] unknown plot type {opts['type']!r}; known: {', '.join(sorted(PLOT_TYPES))}"
                )
            reduce = tuple(a.strip() for a in opts.pop("reduce", "").split(",") if a.strip())
            slices = []
            for item in opts.pop("slice", "").split(","):
                if item.strip():
                    axis, _, idx = item.partition(":")
                    try:
                        slices.append((axis.strip(), int(idx)))
                    except ValueError:
                        raise ConfigError(f"[{section}] slice entries look like 'z:3'") from None
            for axis in list(reduce) + [a for a, _ in slices]:
                if axis not in AXES:
                    raise ConfigError(f"[{section}] unknown axis {axis!r}")
            pres = presentation_from_options(opts, f"[{section}]")
            args = {
                k: _scalar(v) for k, v in opts.items()
                if k not in _PRESENTATION_KEYS and k not in _LIMIT_KEYS
                and k not in ("calc", "type", "result")
            }
            accepted = {s.name for s in PLOT_TYPES[opts["type"]].signature}
            stray = sorted(set(args) - accepted)
            if stray:
                raise ConfigError(
                    f"[{section}] unknown option(s) {', '.join(stray)} for a {opts['type']} plot"
                )
            plots.append(PlotRequest(name, opts["calc"], opts["type"], opts.get("result"),
                                     reduce, tuple(slices), args, pres))
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")

    ids = [c.calc_id for c in calcs]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ConfigError(f"duplicate calculation ids: {', '.join(dupes)}")
    for p in plots:
        if p.calc not in ids:
            raise ConfigError(f"plot {p.name!r} references undeclared calculation {p.calc!r}")
    return RunConfig(datasets, base / run["output"], calcs, plots, threads,
                     run.get("pinned_timestamp") or None, run.get("revision") or None)


# --------------------------------------------------------------------------
# commands

def _pick_results(req: PlotRequest, results: list):
    by_name = {r.name: r for r in results}
    if req.plot_type == "channel":
        if "dx" not in by_name or "dy" not in by_name:
            raise FramepostError(f"plot {req.name!r}: calculation {req.calc!r} has no dx/dy results")
        arrays = {"dx": by_name["dx"], "dy": by_name["dy"]}
    else:
        if req.result is not None:
            if req.result not in by_name:
                raise FramepostError(
                    f"plot {req.name!r}: calculation {req.calc!r} has no result {req.result!r} "
                    f"(has {', '.join(by_name)})"
                )
            arr = by_name[req.result]
        else:
            arr = results[0]
        key = "series" if req.plot_type == "time" else "data"
        arrays = {key: arr}
    out = {}
    for key, arr in arrays.items():
        for axis, idx in req.slices:
            arr = slice_axis(arr, axis, idx)
        if req.reduce:
            arr = reduce_max(arr, req.reduce)
        out[key] = arr
    return out


def _default_title(req: PlotRequest, arrays: dict) -> str:
    # collapsed axes keep no coordinates, so the title records where the data came from
    names = sorted({a.name for a in arrays.values()})
    parts = [" and ".join(names)]
    parts += [f"{axis}={idx}" for axis, idx in req.slices]
    if req.reduce:
        parts.append(f"max over {','.join(req.reduce)}")
    return ", ".join(parts)


def cmd_gen(args) -> int:
    try:
        cfg = SynthConfig(args.nx, args.ny, args.nz, args.frames, args.dt, args.amplitude,
                          args.frequency, args.noise, args.seed)
        if args.frames_per_file < 1:
            raise ValueError("--frames-per-file must be >= 1")
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = generate(cfg, args.out, args.frames_per_file)
    g = manifest.grid
    print(f"wrote {len(manifest.files)} file(s) to {args.out}: grid {g.nx}x{g.ny}x{g.nz}, "
          f"{g.total_frames} frames, dt {g.dt}, record {manifest.record_size} bytes")
    for arc in manifest.files:
        h = arc.header
        print(f"  {arc.path.name}: frames [{h.first_frame}, {h.stop_frame})")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        plugins = [build_calculation(c.kind, c.calc_id, c.params) for c in cfg.calcs]
    except (ConfigError, UnknownCalculationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    threads = args.threads if args.threads is not None else cfg.threads
    timings = {}
    t0 = time.perf_counter()

    manifest = validate_manifest(cfg.datasets)
    engine = Engine(threads=threads)
    for p in plugins:
        engine.register(p)
    plan = engine.plan(manifest)
    planned = planned_bytes(plan, manifest.grid)
    timings["plan_s"] = time.perf_counter() - t0
    cfg.output.mkdir(parents=True, exist_ok=True)
    report = {
        "engine_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "dry_run": bool(args.dry_run),
        "passes": len(plan.passes),
        "planned_bytes": planned,
        "files": [str(p) for p in manifest.paths],
    }

    if args.dry_run:
        print(format_plan(plan, manifest.grid))
        report.update(bytes_read=0, frames_decoded=0,
                      calcs={p.id: {"status": "planned"} for p in plugins}, plots={})
        _write_report(cfg.output, report, timings, args.no_timings)
        return EXIT_OK

    t1 = time.perf_counter()
    result = engine.run(manifest, created_utc=cfg.pinned_timestamp, revision=cfg.revision)
    timings["run_s"] = time.perf_counter() - t1

    calcs_report = {}
    for p in plugins:
        if p.id in result.failures:
            calcs_report[p.id] = {"status": "failed", "failure": result.failures[p.id].to_dict()}
        else:
            calcs_report[p.id] = {"status": "ok", "results": [r.name for r in result.results[p.id]]}
    plots_report = {}
    failed_plots = 0
    for req in cfg.plots:
        if req.calc in result.failures:
            plots_report[req.name] = {"status": "skipped", "reason": f"calculation {req.calc} failed"}
            continue
        try:
            arrays = _pick_results(req, result.results[req.calc])
            extra = dict(req.args)
            cls = PLOT_TYPES[req.plot_type]
            if any(s.name == "dt" for s in cls.signature):
                extra.setdefault("dt", manifest.grid.dt)
            pres = dict(req.presentation)
            pres.setdefault("title", _default_title(req, arrays))
            plot = make_plot(req.plot_type, presentation=pres,
                             traceability=result.traceability[req.calc],
                             created_utc=result.traceability[req.calc].created_utc,
                             **arrays, **extra)
            out = cfg.output / f"{req.name}.plotdoc"
            plot.store(out)
            plots_report[req.name] = {"status": "ok", "file": out.name}
        except FramepostError as exc:
            failed_plots += 1
            plots_report[req.name] = {"status": "failed", "reason": str(exc)}
            print(f"plot {req.name}: {exc}", file=sys.stderr)

    timings["total_s"] = time.perf_counter() - t0
    report.update(
        bytes_read=result.stats.bytes_read,
        frames_decoded=result.stats.frames_decoded,
        decodes_per_pass=result.decodes_per_pass,
        calcs=calcs_report,
        plots=plots_report,
    )
    _write_report(cfg.output, report, timings, args.no_timings)
    for f in result.failures.values():
        where = f"phase {f.phase}, frame {f.frame_index}" if f.phase is not None else "finalize"
        print(f"calculation {f.calc_id} failed ({where}): {f.message}", file=sys.stderr)
    print(f"{len(plan.passes)} pass(es), {result.stats.bytes_read} bytes read, "
          f"{len(plots_report)} plot request(s)")
    return EXIT_FAILURE if result.failures or failed_plots else EXIT_OK


def _write_report(out_dir: Path, report: dict, timings: dict, no_timings: bool):
    if not no_timings:
        report = dict(report, timings={k: round(v, 6) for k, v in timings.items()})
    (out_dir / REPORT_NAME).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _presentation_changes(args) -> dict:
    changes: dict = {}
    for flag, axis in (("xlim", "x"), ("ylim", "y"), ("clim", "c")):
        value = getattr(args, flag)
        if value is not None:
            changes.setdefault("axis_limits", {})[axis] = _pair(value, f"--{flag}")
    for flag, key in (("title", "title"), ("colormap", "colormap_id"),
                      ("line_width", "line_width"), ("marker_size", "marker_size"),
                      ("grid", "grid_lines")):
        value = getattr(args, flag)
        if value is not None:
            changes[key] = value
    try:
        Presentation().updated(changes)
    except FramepostError as exc:
        raise ConfigError(str(exc)) from exc
    return changes


def cmd_render(args) -> int:
    try:
        changes = _presentation_changes(args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    plot = restore(args.doc)
    if changes:
        plot.set_presentation(**changes)
    data = render(plot, args.out)
    print(f"wrote {args.out} ({len(data)} bytes)")
    return EXIT_OK


def cmd_edit(args) -> int:
    try:
        changes = _presentation_changes(args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not changes:
        print("usage error: no presentation changes given", file=sys.stderr)
        return EXIT_USAGE
    status = EXIT_OK
    for doc in args.docs:
        try:
            before = read(doc).payload_sha256()
            updated = edit_presentation(doc, changes, backup=not args.no_backup)
            after = updated.payload_sha256()
        except FramepostError as exc:
            print(f"{doc}: {exc}", file=sys.stderr)
            status = EXIT_FAILURE
            continue
        if before != after:
            print(f"{doc}: payload changed during edit", file=sys.stderr)
            status = EXIT_FAILURE
            continue
        print(f"{doc}: updated, payload sha256 {after} unchanged")
    return status


def cmd_info(args) -> int:
    raw = read(args.doc)
    plot = restore(args.doc)
    h = raw.header
    print(f"plot_type: {h['plot_type']}")
    print(f"format_version: {h['format_version']}")
    print(f"created_utc: {h.get('created_utc')}")
    print("args:")
    for name, value in plot.args.items():
        if hasattr(value, "shape") and hasattr(value, "units"):
            print(f"  {name}: array {value.name!r} shape {list(value.shape)} units {value.units!r}")
        else:
            print(f"  {name}: {value!r}")
    print("presentation:")
    print("  " + json.dumps(plot.presentation.to_dict(), sort_keys=True))
    print(f"payload_sha256: {raw.payload_sha256()}")
    print("traceability:")
    print(json.dumps(h["traceability"], indent=2, sort_keys=True))
    for w in plot.restore_warnings:
        print(f"warning: {w}")
    return EXIT_OK


def _add_presentation_flags(p):
    p.add_argument("--xlim", help="x axis limits 'min,max'")
    p.add_argument("--ylim", help="y axis limits 'min,max'")
    p.add_argument("--clim", help="colour scale limits 'min,max'")
    p.add_argument("--title")
    p.add_argument("--colormap")
    p.add_argument("--line-width", type=float)
    p.add_argument("--marker-size", type=float)
    p.add_argument("--grid", dest="grid", action="store_true", default=None)
    p.add_argument("--no-grid", dest="grid", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="framepost", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--nx", type=int, default=4)
    g.add_argument("--ny", type=int, default=4)
    g.add_argument("--nz", type=int, default=8)
    g.add_argument("--frames", type=int, default=64)
    g.add_argument("--dt", type=float, default=0.01)
    g.add_argument("--amplitude", type=float, default=0.05)
    g.add_argument("--frequency", type=float, default=2.0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--frames-per-file", type=int, default=16)
    g.add_argument("--out", required=True, type=Path)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run calculations from a config file")
    r.add_argument("config", type=Path)
    r.add_argument("--dry-run", action="store_true", help="print the pass plan without reading frames")
    r.add_argument("--threads", type=int)
    r.add_argument("--no-timings", action="store_true",
                   help="leave timing fields out of the run report")
    r.set_defaults(func=cmd_run)

    rd = sub.add_parser("render", help="render a plot document to SVG")
    rd.add_argument("doc", type=Path)
    rd.add_argument("out", type=Path)
    _add_presentation_flags(rd)
    rd.set_defaults(func=cmd_render)

    e = sub.add_parser("edit", help="change presentation of plot documents in place")
    e.add_argument("docs", nargs="+", type=Path)
    e.add_argument("--no-backup", action="store_true", help="do not write .bak copies")
    _add_presentation_flags(e)
    e.set_defaults(func=cmd_edit)

    i = sub.add_parser("info", help="show a plot document's arguments and traceability")
    i.add_argument("doc", type=Path)
    i.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FramepostError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
