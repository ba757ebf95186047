"""Multi-pass execution of calculation plugins over a frame archive."""
from __future__ import annotations

import hashlib
import inspect
import json
import logging
import os
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import __version__
from .errors import DuplicateRegistrationError, TraceabilityIncompleteError
from .framearc import DatasetManifest, IOStats, iter_frames
from .model import FrameView, GridMeta, ResultArray
from .scheduler import CalculationRequirements, PassPlan, PhaseSpec, plan_passes

log = logging.getLogger(__name__)

PINNED_TIME_ENV = "FRAMEPOST_PINNED_TIME"
_CHUNK = 1 << 16


def utc_now() -> str:
    """ISO-8601 UTC timestamp, or the pinned value from ``FRAMEPOST_PINNED_TIME``."""
    pinned = os.environ.get(PINNED_TIME_ENV)
    if pinned:
        return pinned
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class CalculationPlugin:
    """Base class for calculations driven by :class:`Engine`.

    Subclasses set ``id`` (or pass it to ``__init__``) and override the
    callbacks they need. The engine calls ``on_frame`` in strictly
    increasing frame order for exactly the frames of the phase window, and
    never calls two callbacks of the same plugin concurrently. Frame arrays
    are read-only.
    """

    id: str = ""

    def __init__(self, id: str | None = None):
        if id is not None:
            self.id = id
        if not self.id:
            raise ValueError(f"{type(self).__name__} needs an id")

    def requirements(self, grid: GridMeta) -> CalculationRequirements:
        return CalculationRequirements(self.id, (PhaseSpec((0, grid.total_frames)),))

    def on_pass_start(self, phase: int) -> None:
        pass

    def on_frame(self, phase: int, frame: FrameView, grid: GridMeta) -> None:
        pass

    def on_pass_end(self, phase: int) -> None:
        pass

    def finalize(self) -> list[ResultArray]:
        return []

    def config(self) -> dict:
        """Parameters that identify this instance; hashed into traceability."""
        return {}

    def source_hash(self) -> str:
        """SHA-256 over the defining module's file, the class name and ``config()``.

        The file is hashed in chunks rather than parsed, so capturing
        traceability costs no more memory than reading the inputs does.
        """
        h = hashlib.sha256()
        try:
            with open(inspect.getfile(type(self)), "rb") as fh:
                while chunk := fh.read(_CHUNK):
                    h.update(chunk)
        except (OSError, TypeError):
            pass
        h.update(f"\n{type(self).__module__}.{type(self).__qualname__}\n".encode())
        h.update(json.dumps(self.config(), sort_keys=True, default=str).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class InputDigest:
    name: str
    sha256: str
    size: int


@dataclass(frozen=True)
class Traceability:
    engine_version: str
    calc_id: str
    source_hash: str
    inputs: tuple[InputDigest, ...]
    created_utc: str
    revision: str | None = None

    def to_dict(self) -> dict:
        d = {
            "engine_version": self.engine_version,
            "calc_id": self.calc_id,
            "source_hash": self.source_hash,
            "inputs": [{"name": i.name, "sha256": i.sha256, "size": i.size} for i in self.inputs],
            "created_utc": self.created_utc,
        }
        if self.revision is not None:
            d["revision"] = self.revision
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Traceability":
        return cls(
            d["engine_version"], d["calc_id"], d["source_hash"],
            tuple(InputDigest(i["name"], i["sha256"], int(i["size"])) for i in d["inputs"]),
            d["created_utc"], d.get("revision"),
        )


def file_digests(manifest: DatasetManifest) -> tuple[InputDigest, ...]:
    out = []
    for arc in manifest.files:
        h = hashlib.sha256()
        size = 0
        try:
            with open(arc.path, "rb") as fh:
                while chunk := fh.read(_CHUNK):
                    h.update(chunk)
                    size += len(chunk)
        except OSError as exc:
            raise TraceabilityIncompleteError(f"cannot hash input {arc.path}: {exc}") from exc
        out.append(InputDigest(str(arc.path), h.hexdigest(), size))
    return tuple(out)


def capture_traceability(
    manifest: DatasetManifest, plugin: CalculationPlugin, *,
    created_utc: str | None = None, digests=None, revision: str | None = None,
) -> Traceability:
    if digests is None:
        digests = file_digests(manifest)
    return Traceability(
        __version__, plugin.id, plugin.source_hash(), tuple(digests),
        created_utc or utc_now(), revision,
    )


@dataclass(frozen=True)
class Failure:
    calc_id: str
    phase: int | None
    frame_index: int | None
    message: str

    def to_dict(self) -> dict:
        return {"calc_id": self.calc_id, "phase": self.phase,
                "frame_index": self.frame_index, "message": self.message}


@dataclass
class RunResult:
    plan: PassPlan
    results: dict[str, list[ResultArray]] = field(default_factory=dict)
    traceability: dict[str, Traceability] = field(default_factory=dict)
    failures: dict[str, Failure] = field(default_factory=dict)
    stats: IOStats = field(default_factory=IOStats)
    decodes_per_pass: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


_DONE = object()


def _read_ahead(frames, depth):
    """Decode frames on a worker thread, keeping at most ``depth`` queued."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    stop = threading.Event()

    def produce():
        try:
            for f in frames:
                while not stop.is_set():
                    try:
                        q.put(f, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(_DONE)
        except BaseException as exc:  # handed to the consumer
            q.put(exc)

    t = threading.Thread(target=produce, daemon=True)
    t.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        t.join()


class Engine:
    def __init__(self, threads: int = 1):
        self.threads = max(1, int(threads))
        self._plugins: dict[str, CalculationPlugin] = {}

    def register(self, plugin: CalculationPlugin) -> str:
        if plugin.id in self._plugins:
            raise DuplicateRegistrationError(f"a calculation with id {plugin.id!r} is already registered")
        self._plugins[plugin.id] = plugin
        return plugin.id

    @property
    def plugins(self) -> list[CalculationPlugin]:
        return list(self._plugins.values())

    def requirements(self, grid: GridMeta) -> list[CalculationRequirements]:
        reqs = []
        for p in self._plugins.values():
            r = p.requirements(grid)
            if r.calc_id != p.id:
                r = CalculationRequirements(p.id, r.phases)
            reqs.append(r)
        return reqs

    def plan(self, manifest: DatasetManifest) -> PassPlan:
        return plan_passes(self.requirements(manifest.grid), manifest)

    def run(
        self, manifest: DatasetManifest, *, created_utc: str | None = None,
        revision: str | None = None,
    ) -> RunResult:
        grid = manifest.grid
        reqs = {r.calc_id: r for r in self.requirements(grid)}
        plan = plan_passes(list(reqs.values()), manifest)
        out = RunResult(plan)

        if self._plugins:
            digests = file_digests(manifest)
            stamp = created_utc or utc_now()
            for p in self._plugins.values():
                out.traceability[p.id] = capture_traceability(
                    manifest, p, created_utc=stamp, digests=digests, revision=revision
                )

        def guarded(plugin, phase, frame_index, fn, *args):
            if plugin.id in out.failures:
                return
            try:
                fn(*args)
            except Exception as exc:
                log.warning("calculation %s failed in phase %s at frame %s: %s",
                            plugin.id, phase, frame_index, exc)
                out.failures[plugin.id] = Failure(
                    plugin.id, phase, frame_index, f"{type(exc).__name__}: {exc}"
                )

        pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        try:
            for k, ps in enumerate(plan.passes):
                active = [
                    (self._plugins[cid], reqs[cid].phases[k].window)
                    for cid, _ in ps.active
                    if cid not in out.failures
                ]
                for plugin, _ in active:
                    guarded(plugin, k, None, plugin.on_pass_start, k)

                before = out.stats.frames_decoded
                frames = iter_frames(manifest, list(ps.frame_window_union), out.stats)
                if pool is not None:
                    frames = _read_ahead(frames, depth=2)
                for frame in frames:
                    i = frame.frame_index
                    targets = [p for p, (a, b) in active if a <= i < b and p.id not in out.failures]
                    if pool is not None and len(targets) > 1:
                        list(pool.map(
                            lambda p: guarded(p, k, i, p.on_frame, k, frame, grid), targets
                        ))
                    else:
                        for p in targets:
                            guarded(p, k, i, p.on_frame, k, frame, grid)
                out.decodes_per_pass.append(out.stats.frames_decoded - before)

                for plugin, _ in active:
                    guarded(plugin, k, None, plugin.on_pass_end, k)
        finally:
            if pool is not None:
                pool.shutdown()

        for p in self._plugins.values():
            if p.id in out.failures:
                continue
            try:
                out.results[p.id] = list(p.finalize())
            except Exception as exc:
                out.failures[p.id] = Failure(p.id, None, None, f"{type(exc).__name__}: {exc}")
        return out
