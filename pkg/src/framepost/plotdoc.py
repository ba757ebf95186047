"""Plot documents: stored plots that can be restored, re-rendered and edited.

A plot is fully described by its type and its named arguments, so storing
a plot means writing those two things and restoring it means calling the
plot class again with them. Positional arguments are bound to names first,
so the same logical call always produces the same document.

Container layout::

    b"PLOTDOC1"                 8 bytes
    header length               u32 little-endian
    header                      UTF-8 JSON, keys sorted, no whitespace
    payload                     little-endian float64 arrays, back to back

Array arguments appear in the header as descriptors
``{"name", "kind": "array", "dtype": "f64", "shape", "offset", "len",
"array_name", "units"}`` where ``offset`` is a byte offset into the payload
and ``len`` an element count.
"""
from __future__ import annotations

import hashlib
import inspect
import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any, ClassVar

import numpy as np

from . import __version__
from .colormap import COLORMAPS, DEFAULT_COLORMAP
from .engine import Traceability, utc_now
from .errors import (
    ArgumentKindError,
    DocumentCorruptionError,
    ImmutabilityViolationError,
    MissingArgumentError,
    PresentationError,
    ShapeError,
    UnknownArgumentError,
    UnknownColormapError,
    UnknownPlotTypeError,
)
from .model import ResultArray, make_result

MAGIC = b"PLOTDOC1"
FORMAT_VERSION = 1
_LEN = struct.Struct("<I")
_PREFIX = len(MAGIC) + _LEN.size


class RestoreWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# signatures

@dataclass(frozen=True)
class ArgSpec:
    name: str
    kind: str  # "array" | "real" | "int" | "str"
    required: bool = False
    default: Any = None

    def __post_init__(self):
        if self.required and self.default is not None:
            raise ValueError(f"required argument {self.name!r} cannot have a default")


def _coerce(spec: ArgSpec, value):
    kind = spec.kind
    if kind == "array":
        if not isinstance(value, ResultArray):
            raise ArgumentKindError(f"argument {spec.name!r} must be a ResultArray, got {type(value).__name__}")
        return value
    if kind == "real":
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise ArgumentKindError(f"argument {spec.name!r} must be a real number")
        value = float(value)
        if not math.isfinite(value):
            raise ArgumentKindError(f"argument {spec.name!r} must be finite")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise ArgumentKindError(f"argument {spec.name!r} must be an integer")
        return int(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ArgumentKindError(f"argument {spec.name!r} must be a string")
        return value
    raise ValueError(f"unknown argument kind {kind!r}")


# --------------------------------------------------------------------------
# presentation

AXIS_KEYS = ("x", "y", "c")


@dataclass(frozen=True)
class Presentation:
    title: str = ""
    axis_limits: tuple = ()  # sorted ((axis, (lo, hi)), ...)
    colormap_id: str = DEFAULT_COLORMAP
    marker_size: float = 1.0
    line_width: float = 1.5
    grid_lines: bool = True

    def __post_init__(self):
        limits = self.axis_limits
        if isinstance(limits, dict):
            limits = limits.items()
        norm = []
        for axis, pair in limits:
            if axis not in AXIS_KEYS:
                raise PresentationError(f"unknown axis {axis!r} in axis_limits, expected one of {AXIS_KEYS}")
            if pair is None:
                continue
            lo, hi = float(pair[0]), float(pair[1])
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise PresentationError(f"axis_limits for {axis!r} need min < max, got ({lo}, {hi})")
            norm.append((axis, (lo, hi)))
        object.__setattr__(self, "axis_limits", tuple(sorted(norm)))
        if self.colormap_id not in COLORMAPS:
            raise UnknownColormapError(f"unknown colormap {self.colormap_id!r}")
        for name in ("marker_size", "line_width"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
                raise PresentationError(f"{name} must be a positive real, got {v!r}")
            object.__setattr__(self, name, float(v))
        if not isinstance(self.grid_lines, bool):
            raise PresentationError("grid_lines must be a boolean")
        if not isinstance(self.title, str):
            raise PresentationError("title must be a string")

    def limits(self, axis: str):
        return dict(self.axis_limits).get(axis)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["axis_limits"] = {a: list(p) for a, p in self.axis_limits}
        return d

    @classmethod
    def from_dict(cls, d: dict, warn=None) -> "Presentation":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for k, v in d.items():
            if k in known:
                kwargs[k] = v
            elif warn is not None:
                warn(f"ignoring unknown presentation field {k!r}")
        if "axis_limits" in kwargs:
            kwargs["axis_limits"] = {a: tuple(p) for a, p in kwargs["axis_limits"].items()}
        return cls(**kwargs)

    def updated(self, changes: dict) -> "Presentation":
        changes = dict(changes)
        if "axis_limits" in changes:
            merged = dict(self.axis_limits)
            for axis, pair in dict(changes["axis_limits"]).items():
                if pair is None:
                    merged.pop(axis, None)
                else:
                    merged[axis] = pair
            changes["axis_limits"] = merged
        return replace(self, **changes)


PRESENTATION_FIELDS = tuple(f.name for f in fields(Presentation))


# --------------------------------------------------------------------------
# plot classes

PLOT_TYPES: dict[str, type["BasePlot"]] = {}


def _caller_traceability(created_utc: str) -> dict:
    """Traceability for plots built directly from user code: identify the calling module."""
    calc_id, digest = "", ""
    here = Path(__file__).resolve()
    for info in inspect.stack(context=0)[1:]:
        path = Path(info.filename)
        if path.resolve() == here:
            continue
        calc_id = info.frame.f_globals.get("__name__", "")
        try:
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
        except OSError:
            pass
        break
    return Traceability(__version__, calc_id, digest, (), created_utc).to_dict()


class BasePlot:
    """A plot defined entirely by its type and named arguments.

    Data arguments are fixed at construction; only the presentation can be
    changed afterwards.
    """

    plot_type: ClassVar[str] = ""
    signature: ClassVar[tuple[ArgSpec, ...]] = ()
    migrations: ClassVar[dict[str, str | None]] = {}

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        if cls.plot_type:
            PLOT_TYPES[cls.plot_type] = cls

    def __init__(self, *args, presentation: Presentation | dict | None = None,
                 traceability: Traceability | dict | None = None,
                 created_utc: str | None = None, **kwargs):
        self._args = MappingProxyType(self.bind(*args, **kwargs))
        self.check_shapes()
        if presentation is None:
            presentation = Presentation()
        elif isinstance(presentation, dict):
            presentation = Presentation(**presentation)
        self._presentation = presentation
        self.created_utc = created_utc or utc_now()
        if traceability is None:
            traceability = _caller_traceability(self.created_utc)
        elif isinstance(traceability, Traceability):
            traceability = traceability.to_dict()
        self._traceability = json.loads(json.dumps(traceability))
        self.restore_warnings: list[str] = []

    @classmethod
    def bind(cls, *args, **kwargs) -> dict:
        """Map positional and keyword arguments onto the signature, in signature order."""
        specs = cls.signature
        if len(args) > len(specs):
            raise UnknownArgumentError(
                f"{cls.plot_type} plot takes at most {len(specs)} arguments, got {len(args)}"
            )
        given = {}
        for spec, value in zip(specs, args):
            given[spec.name] = value
        names = [s.name for s in specs]
        for k, v in kwargs.items():
            if k not in names:
                raise UnknownArgumentError(
                    f"unknown argument {k!r} for {cls.plot_type} plot; valid names: {', '.join(names)}"
                )
            if k in given:
                raise UnknownArgumentError(f"argument {k!r} given twice")
            given[k] = v
        bound = {}
        for spec in specs:
            if spec.name in given:
                bound[spec.name] = _coerce(spec, given[spec.name])
            elif spec.required:
                raise MissingArgumentError(f"{cls.plot_type} plot requires argument {spec.name!r}")
            else:
                bound[spec.name] = spec.default
        return bound

    def check_shapes(self) -> None:
        pass

    @property
    def args(self):
        return self._args

    @property
    def presentation(self) -> Presentation:
        return self._presentation

    @property
    def traceability(self) -> dict:
        return json.loads(json.dumps(self._traceability))

    def set_presentation(self, **changes) -> None:
        bad = [k for k in changes if k not in PRESENTATION_FIELDS]
        if bad:
            raise PresentationError(f"not presentation fields: {', '.join(bad)}")
        self._presentation = self._presentation.updated(changes)

    def set_title(self, title: str) -> None:
        self.set_presentation(title=title)

    def set_axis_limits(self, axis: str, lo: float, hi: float) -> None:
        self.set_presentation(axis_limits={axis: (lo, hi)})

    def arrays(self) -> dict[str, ResultArray]:
        return {k: v for k, v in self._args.items() if isinstance(v, ResultArray)}

    def to_bytes(self) -> bytes:
        return encode(self)

    def store(self, path) -> int:
        parts = encode_parts(self)
        with open(path, "wb") as fh:
            for part in parts:
                fh.write(part)
        return sum(len(part) for part in parts)

    def render(self, out_path=None, **canvas) -> bytes:
        from .render import render
        return render(self, out_path, **canvas)

    def __repr__(self):
        parts = ", ".join(
            f"{k}=<{v.name} {v.shape}>" if isinstance(v, ResultArray) else f"{k}={v!r}"
            for k, v in self._args.items()
        )
        return f"{type(self).__name__}({parts})"


def _shape_error(arg, expected, got):
    raise ShapeError(f"argument {arg!r}: expected shape {expected}, got {got}")


class LayerPlot(BasePlot):
    """Plan view of one horizontal slice, one discrete marker per brick column."""

    plot_type = "layer"
    signature = (
        ArgSpec("data", "array", required=True),
        ArgSpec("label", "str", default=""),
    )
    migrations = {"values": "data", "cmap": None}

    def check_shapes(self):
        s = self.args["data"].shape
        if s[2] != 1 or s[3] != 1:
            _shape_error("data", "(nx, ny, 1, 1)", s)


class ChannelPlot(BasePlot):
    """One column projected onto the X-Z and Y-Z planes at a single frame."""

    plot_type = "channel"
    signature = (
        ArgSpec("dx", "array", required=True),
        ArgSpec("dy", "array", required=True),
        ArgSpec("frame", "int", default=-1),
        ArgSpec("dt", "real", default=1.0),
    )
    migrations = {"frame_index": "frame", "timestep": "dt"}

    def check_shapes(self):
        dx, dy = self.args["dx"], self.args["dy"]
        for name, a in (("dx", dx), ("dy", dy)):
            if a.shape[0] != 1 or a.shape[1] != 1:
                _shape_error(name, "(1, 1, nz, T)", a.shape)
        if dx.shape != dy.shape:
            _shape_error("dy", dx.shape, dy.shape)
        frame = self.args["frame"]
        if not -1 <= frame < dx.shape[3]:
            raise ShapeError(f"frame {frame} outside 0..{dx.shape[3] - 1}")
        if not self.args["dt"] > 0:
            raise ArgumentKindError("dt must be positive")

    def selected_frame(self) -> int:
        """Requested frame, or the frame with the largest column excursion."""
        frame = self.args["frame"]
        if frame >= 0:
            return frame
        dx = self.args["dx"].array[0, 0]
        dy = self.args["dy"].array[0, 0]
        excursion = (np.abs(dx) + np.abs(dy)).max(axis=0)
        return int(np.argmax(excursion))


MAX_SERIES = 16


class TimePlot(BasePlot):
    """Time histories; every spatial cell of ``series`` is one line."""

    plot_type = "time"
    signature = (
        ArgSpec("series", "array", required=True),
        ArgSpec("dt", "real", default=1.0),
        ArgSpec("t0", "real", default=0.0),
        ArgSpec("label", "str", default=""),
    )
    migrations = {"timestep": "dt", "data": "series"}

    def check_shapes(self):
        s = self.args["series"].shape
        if s[0] * s[1] * s[2] > MAX_SERIES:
            _shape_error("series", f"(sx, sy, sz, T) with at most {MAX_SERIES} series", s)
        if not self.args["dt"] > 0:
            raise ArgumentKindError("dt must be positive")


class WaterfallPlot(BasePlot):
    """Distribution over all bricks at each time step, as nested quantile bands."""

    plot_type = "waterfall"
    signature = (
        ArgSpec("data", "array", required=True),
        ArgSpec("dt", "real", default=1.0),
        ArgSpec("label", "str", default=""),
    )
    migrations = {"timestep": "dt"}

    def check_shapes(self):
        if not self.args["dt"] > 0:
            raise ArgumentKindError("dt must be positive")


def plot_class(plot_type: str) -> type[BasePlot]:
    try:
        return PLOT_TYPES[plot_type]
    except KeyError:
        raise UnknownPlotTypeError(
            f"unknown plot type {plot_type!r}; known: {', '.join(sorted(PLOT_TYPES))}"
        ) from None


def make_plot(plot_type: str, *args, **kwargs) -> BasePlot:
    return plot_class(plot_type)(*args, **kwargs)


# --------------------------------------------------------------------------
# encoding

def _canonical(obj) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def encode(plot: BasePlot) -> bytes:
    return b"".join(encode_parts(plot))


def encode_parts(plot: BasePlot) -> list:
    """The stored document as a list of buffers; payload arrays are not copied."""
    arg_entries = []
    chunks = []
    offset = 0
    for name, value in plot.args.items():
        if isinstance(value, ResultArray):
            raw = memoryview(np.ascontiguousarray(value.values, dtype="<f8")).cast("B")
            arg_entries.append({
                "name": name, "kind": "array", "dtype": "f64",
                "shape": list(value.shape), "offset": offset, "len": value.values.size,
                "array_name": value.name, "units": value.units,
            })
            chunks.append(raw)
            offset += len(raw)
        else:
            kind = next(s.kind for s in plot.signature if s.name == name)
            arg_entries.append({"name": name, "kind": kind, "value": value})
    header = {
        "format_version": FORMAT_VERSION,
        "plot_type": plot.plot_type,
        "args": arg_entries,
        "presentation": plot.presentation.to_dict(),
        "traceability": plot._traceability,
        "created_utc": plot.created_utc,
    }
    head = _canonical(header)
    return [MAGIC + _LEN.pack(len(head)) + head, *chunks]


@dataclass
class RawDocument:
    """Undecoded view of a stored document: JSON header plus payload bytes."""

    header: dict
    payload: bytes
    header_bytes: bytes = field(repr=False, default=b"")

    def payload_sha256(self) -> str:
        return hashlib.sha256(self.payload).hexdigest()

    def to_bytes(self) -> bytes:
        head = _canonical(self.header)
        return MAGIC + _LEN.pack(len(head)) + head + self.payload


def parse(data: bytes, source="<bytes>") -> RawDocument:
    if len(data) < _PREFIX or data[: len(MAGIC)] != MAGIC:
        raise DocumentCorruptionError(f"{source}: not a plot document (bad magic)")
    (hlen,) = _LEN.unpack_from(data, len(MAGIC))
    if _PREFIX + hlen > len(data):
        raise DocumentCorruptionError(
            f"{source}: header length {hlen} exceeds file size {len(data)}"
        )
    head = data[_PREFIX:_PREFIX + hlen]
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DocumentCorruptionError(f"{source}: unreadable header: {exc}") from exc
    if not isinstance(header, dict):
        raise DocumentCorruptionError(f"{source}: header is not an object")
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise DocumentCorruptionError(f"{source}: unsupported format_version {version!r}")
    for key in ("plot_type", "args", "presentation", "traceability"):
        if key not in header:
            raise DocumentCorruptionError(f"{source}: header lacks {key!r}")
    return RawDocument(header, data[_PREFIX + hlen:], head)


def read(path) -> RawDocument:
    return parse(Path(path).read_bytes(), path)


def _decode_args(raw: RawDocument, cls: type[BasePlot], source, warn) -> dict:
    payload = raw.payload
    valid = {s.name for s in cls.signature}
    kwargs = {}
    for entry in raw.header["args"]:
        try:
            name, kind = entry["name"], entry["kind"]
        except (KeyError, TypeError):
            raise DocumentCorruptionError(f"{source}: malformed argument entry {entry!r}") from None
        if name not in valid and name in cls.migrations:
            new = cls.migrations[name]
            if new is None:
                warn(f"argument {name!r} is deprecated for {cls.plot_type} plots and was dropped")
                continue
            warn(f"argument {name!r} is deprecated for {cls.plot_type} plots, restored as {new!r}")
            name = new
        if kind == "array":
            try:
                shape = tuple(int(s) for s in entry["shape"])
                offset, n = int(entry["offset"]), int(entry["len"])
            except (KeyError, TypeError, ValueError):
                raise DocumentCorruptionError(f"{source}: malformed array descriptor for {name!r}") from None
            if entry.get("dtype") != "f64":
                raise DocumentCorruptionError(f"{source}: array {name!r} has unsupported dtype {entry.get('dtype')!r}")
            if len(shape) != 4 or n != int(np.prod(shape)) or offset < 0 or offset % 8:
                raise DocumentCorruptionError(
                    f"{source}: array {name!r} descriptor inconsistent (shape {shape}, len {n}, offset {offset})"
                )
            if offset + 8 * n > len(payload):
                raise DocumentCorruptionError(
                    f"{source}: array {name!r} needs payload bytes [{offset}, {offset + 8 * n}) "
                    f"but payload holds {len(payload)}"
                )
            values = np.frombuffer(payload, dtype="<f8", count=n, offset=offset)
            value = make_result(entry.get("array_name", name), entry.get("units", ""), shape, values)
        else:
            if "value" not in entry:
                raise DocumentCorruptionError(f"{source}: argument {name!r} has no value")
            value = entry["value"]
        kwargs[name] = value
    return kwargs


def restore(path) -> BasePlot:
    """Rebuild a live plot from a stored document.

    Deprecated argument names are mapped through the plot type's migration
    table; the resulting messages end up in ``restore_warnings`` and are
    emitted as :class:`RestoreWarning`.
    """
    return restore_bytes(Path(path).read_bytes(), path)


def restore_bytes(data: bytes, source="<bytes>") -> BasePlot:
    raw = parse(data, source)
    cls = plot_class(raw.header["plot_type"])
    notes: list[str] = []
    kwargs = _decode_args(raw, cls, source, notes.append)
    presentation = Presentation.from_dict(raw.header["presentation"], warn=notes.append)
    plot = cls(
        presentation=presentation,
        traceability=raw.header["traceability"],
        created_utc=raw.header.get("created_utc"),
        **kwargs,
    )
    plot.restore_warnings = notes
    for msg in notes:
        warnings.warn(f"{source}: {msg}", RestoreWarning, stacklevel=2)
    return plot


def store(plot_type: str, args: dict, presentation=None, traceability=None, path=None,
          *, created_utc: str | None = None) -> int:
    """Validate ``args`` against the plot type's signature and write a document."""
    plot = make_plot(plot_type, presentation=presentation, traceability=traceability,
                     created_utc=created_utc, **args)
    return plot.store(path)


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def edit_presentation(path, changes: dict, *, timestamp: str | None = None,
                      backup: bool = False) -> RawDocument:
    """Apply presentation ``changes`` to a stored document in place.

    Arguments and payload bytes are carried over untouched; every changed
    field is appended to the traceability edit log.
    """
    path = Path(path)
    data = path.read_bytes()
    raw = parse(data, path)
    cls = plot_class(raw.header["plot_type"])
    arg_names = {s.name for s in cls.signature} | set(cls.migrations) | {"args", "payload"}
    blocked = sorted(k for k in changes if k in arg_names)
    if blocked:
        raise ImmutabilityViolationError(
            f"{path}: {', '.join(blocked)} belong to the plot data and cannot be edited"
        )
    unknown = sorted(k for k in changes if k not in PRESENTATION_FIELDS)
    if unknown:
        raise PresentationError(
            f"not presentation fields: {', '.join(unknown)}; editable: {', '.join(PRESENTATION_FIELDS)}"
        )

    old = Presentation.from_dict(raw.header["presentation"])
    new = old.updated(changes)
    old_d, new_d = old.to_dict(), new.to_dict()
    stamp = timestamp or utc_now()
    log = []
    for key in PRESENTATION_FIELDS:
        if key == "axis_limits":
            for axis in AXIS_KEYS:
                a, b = old_d[key].get(axis), new_d[key].get(axis)
                if a != b:
                    log.append({"field": f"axis_limits.{axis}", "old": a, "new": b, "timestamp": stamp})
        elif old_d[key] != new_d[key]:
            log.append({"field": key, "old": old_d[key], "new": new_d[key], "timestamp": stamp})

    header = dict(raw.header)
    header["presentation"] = new_d
    trace = dict(header["traceability"])
    trace["edits"] = list(trace.get("edits", [])) + _jsonable(log)
    header["traceability"] = trace
    updated = RawDocument(header, raw.payload)
    if backup:
        path.with_name(path.name + ".bak").write_bytes(data)
    path.write_bytes(updated.to_bytes())
    return updated
