"""Parallel evaluation of design points with caching and external simulators.

The engine multiplexes a batch of design points over a pool of worker
threads.  Three simulator kinds exist:

* ``internal-motf``      the built-in thin-film solver;
* ``internal-synthetic`` a smooth deterministic stand-in for problems whose
                         real physics needs an external tool (clearly
                         non-physical, exists so the pipeline is testable
                         offline; can also sleep per call for throughput
                         experiments);
* ``external-adapter``   one child process per worker speaking
                         line-delimited JSON over stdin/stdout.

Results always come back in input order, one terminal record per point:
either a response or a failure reason in the record's metadata.  An optional
cache (in memory plus an append-only JSON-lines file) serves repeated points
without re-simulation; keys quantize normalized continuous coordinates to
1e-9 so optimizer-proposed near-duplicates hit while physically distinct
points never alias.
"""

from __future__ import annotations

import hashlib
import json
import os
import select
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from queue import Empty, Queue
from typing import Sequence

import numpy as np

from .problems import get_space, synthetic_response
from .records import EvalRecord
from .space import DesignPoint, DesignSpace, mse_loss
from .tmm import motf_forward

__all__ = [
    "EngineError",
    "AdapterProtocolError",
    "AdapterTimeoutError",
    "SimulatorBinding",
    "cache_key",
    "Engine",
    "evaluate_batch",
    "adapter_roundtrip",
    "throughput_curve",
]

KINDS = ("internal-motf", "internal-synthetic", "external-adapter")
MAX_ATTEMPTS = 3


class EngineError(RuntimeError):
    pass


class AdapterProtocolError(EngineError):
    """Adapter broke the line protocol; carries the offending raw line."""


class AdapterTimeoutError(EngineError):
    pass


@dataclass(frozen=True)
class SimulatorBinding:
    """Which simulator to run, how wide, and whether to cache."""

    kind: str
    problem: str
    workers: int = 1
    cache: bool = False
    cache_path: str | None = None
    adapter_cmd: str | None = None
    timeout: float = 30.0
    sleep_s: float = 0.0
    send_geometry: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown simulator kind {self.kind!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        external = self.kind == "external-adapter"
        if external != bool(self.adapter_cmd):
            raise ValueError("adapter_cmd is required for, and only for, external-adapter")


def cache_key(space: DesignSpace, point: DesignPoint, problem: str) -> str:
    """Digest of the problem id and the canonical quantized point."""
    u = space.normalize(point)
    parts = [problem]
    for i, kind in enumerate(space.unit_kinds()):
        if kind is None:
            parts.append(f"f{int(round(u[i] * 1e9))}")
        else:
            parts.append(f"c{min(int(u[i] * kind), kind - 1)}")
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


class _Cache:
    """Thread-safe response cache with optional JSON-lines persistence."""

    def __init__(self, path: str | None):
        self._mem: dict[str, list[float]] = {}
        self._path = path
        self._lock = threading.Lock()
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        self._mem[row["key"]] = row["y"]

    def get(self, key: str) -> list[float] | None:
        with self._lock:
            return self._mem.get(key)

    def put(self, key: str, y: list[float]) -> None:
        with self._lock:
            if key in self._mem:
                return
            self._mem[key] = y
            if self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "y": y}, separators=(",", ":")))
                    fh.write("\n")


def _request_payload(
    req_id: int, problem: str, point: DesignPoint, geometry: str | None
) -> str:
    xs: list = []
    for v in point.values:
        xs.append(v if isinstance(v, str) else float(v))
    body: dict = {"id": req_id, "problem": problem, "x": xs}
    if geometry is not None:
        body["geometry"] = geometry
    return json.dumps(body, separators=(",", ":"))


class _AdapterWorker:
    """One child process plus its buffered line reader."""

    def __init__(self, cmd: str, timeout: float):
        self.proc = subprocess.Popen(
            shlex.split(cmd),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            bufsize=0,
        )
        self.timeout = timeout
        self._buf = bytearray()

    def alive(self) -> bool:
        return self.proc.poll() is None

    def close(self) -> None:
        try:
            self.proc.kill()
        except OSError:
            pass
        self.proc.wait()

    def _readline(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        fd = self.proc.stdout.fileno()
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise AdapterTimeoutError(f"no response within {self.timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise AdapterTimeoutError(f"no response within {self.timeout}s")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise EngineError("adapter closed its output stream")
            self._buf.extend(chunk)

    def call(self, req_id: int, payload: str) -> list[float]:
        """One request/response exchange; raises on any protocol breach."""
        try:
            self.proc.stdin.write(payload.encode() + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EngineError(f"adapter stdin closed: {exc}") from exc
        raw = self._readline()
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise AdapterProtocolError(f"bad JSON from adapter: {raw!r}") from exc
        if not isinstance(msg, dict) or msg.get("id") != req_id:
            raise AdapterProtocolError(f"response id mismatch: {raw!r}")
        if "error" in msg:
            raise _PointFailed(str(msg["error"]))
        y = msg.get("y")
        if not isinstance(y, list) or not all(isinstance(v, (int, float)) for v in y):
            raise AdapterProtocolError(f"response lacks numeric 'y': {raw!r}")
        return [float(v) for v in y]


class _PointFailed(Exception):
    """The simulator reported a per-point failure; terminal, not retried."""


class Engine:
    """Owns the worker pool; evaluate_batch is the single entry point."""

    def __init__(self, binding: SimulatorBinding):
        self.binding = binding
        self.space = get_space(binding.problem)
        self._cache = _Cache(binding.cache_path) if binding.cache else None
        self._next_id = 0
        self._geom_dir: str | None = None

    # -- internal simulators --------------------------------------------------

    def _simulate(self, point: DesignPoint) -> np.ndarray:
        if self.binding.kind == "internal-motf":
            if self.binding.problem != "motf":
                raise EngineError("internal-motf only simulates the motf problem")
            return motf_forward(point)
        if self.binding.sleep_s > 0:
            time.sleep(self.binding.sleep_s)
        return synthetic_response(point, self.binding.problem)

    # -- shared plumbing -------------------------------------------------------

    def _geometry_path(self, point: DesignPoint, idx: int) -> str | None:
        if not self.binding.send_geometry or self.binding.problem == "motf":
            return None
        import tempfile

        from .shapes import save_raster, scf_layout, tpv_layout

        if self._geom_dir is None:
            self._geom_dir = tempfile.mkdtemp(prefix="idkit-geom-")
        layout = tpv_layout if self.binding.problem == "tpv" else scf_layout
        raster = layout(point)
        path = os.path.join(self._geom_dir, f"g{idx}.pgm")
        save_raster(raster, path)
        return path

    def _finish(
        self,
        point: DesignPoint,
        y: list[float],
        target: np.ndarray | None,
        trial: int,
        dt: float,
        meta: dict | None = None,
    ) -> EvalRecord:
        arr = np.asarray(y, dtype=float)
        loss = mse_loss(arr, target) if target is not None else mse_loss(arr, np.zeros_like(arr))
        return EvalRecord(point, arr, loss, trial, wall_time=dt, meta=meta or {})

    def _failed(self, point: DesignPoint, reason: str, trial: int, dt: float) -> EvalRecord:
        return EvalRecord(
            point, np.zeros(0), float("inf"), trial, wall_time=dt, meta={"error": reason}
        )

    # -- batch evaluation -------------------------------------------------------

    def evaluate_batch(
        self,
        points: Sequence[DesignPoint],
        target: np.ndarray | None = None,
        start_trial: int = 0,
    ) -> list[EvalRecord]:
        for p in points:
            check = self.space.validate(p)
            if not check:
                raise EngineError(f"invalid point: {'; '.join(check.violations)}")
        if self.binding.kind == "external-adapter":
            return self._run_external(points, target, start_trial)
        return self._run_internal(points, target, start_trial)

    def _run_internal(self, points, target, start_trial) -> list[EvalRecord]:
        results: list[EvalRecord | None] = [None] * len(points)
        keys = [
            cache_key(self.space, p, self.binding.problem) if self._cache else None
            for p in points
        ]
        # first occurrence of each key simulates; later ones wait for it
        leaders: dict[str, int] = {}
        followers: list[int] = []
        jobs: list[int] = []
        for i, key in enumerate(keys):
            if key is not None and key in leaders:
                followers.append(i)
            elif key is not None and self._cache.get(key) is not None:
                followers.append(i)
            else:
                if key is not None:
                    leaders[key] = i
                jobs.append(i)

        def run_one(i: int) -> EvalRecord:
            t0 = time.monotonic()
            try:
                y = self._simulate(points[i])
            except Exception as exc:
                return self._failed(points[i], f"{type(exc).__name__}: {exc}", start_trial + i, time.monotonic() - t0)
            dt = time.monotonic() - t0
            if keys[i] is not None:
                self._cache.put(keys[i], [float(v) for v in y])
            return self._finish(points[i], list(map(float, y)), target, start_trial + i, dt)

        if self.binding.workers == 1 or len(jobs) <= 1:
            for i in jobs:
                results[i] = run_one(i)
        else:
            with ThreadPoolExecutor(max_workers=self.binding.workers) as pool:
                for i, rec in zip(jobs, pool.map(run_one, jobs)):
                    results[i] = rec
        for i in followers:
            t0 = time.monotonic()
            y = self._cache.get(keys[i])
            if y is None:
                leader = results[leaders[keys[i]]]
                if leader is not None and not leader.failed:
                    y = [float(v) for v in leader.response]
            if y is None:
                results[i] = self._failed(
                    points[i], "cache leader failed", start_trial + i, 0.0
                )
            else:
                results[i] = self._finish(
                    points[i], y, target, start_trial + i, time.monotonic() - t0,
                    meta={"cache": "hit"},
                )
        return results  # type: ignore[return-value]

    # -- external adapters -------------------------------------------------------

    def _run_external(self, points, target, start_trial) -> list[EvalRecord]:
        n = len(points)
        results: list[EvalRecord | None] = [None] * n
        keys = [
            cache_key(self.space, p, self.binding.problem) if self._cache else None
            for p in points
        ]
        todo: Queue = Queue()
        queued = 0
        leaders: dict[str, int] = {}
        followers: list[int] = []
        for i in range(n):
            if keys[i] is not None:
                hit = self._cache.get(keys[i])
                if hit is not None:
                    results[i] = self._finish(
                        points[i], hit, target, start_trial + i, 0.0, meta={"cache": "hit"}
                    )
                    continue
                if keys[i] in leaders:
                    # in-batch duplicate; wait for the first occurrence
                    followers.append(i)
                    continue
                leaders[keys[i]] = i
            todo.put((i, 0))
            queued += 1

        done = threading.Semaphore(0)
        lock = threading.Lock()
        pool_errors: list[str] = []
        n_workers = min(self.binding.workers, max(queued, 1))

        def serve() -> None:
            # a thread owns one child process; losing the child retires the
            # thread and its in-flight point goes back for the survivors
            try:
                worker = _AdapterWorker(self.binding.adapter_cmd, self.binding.timeout)
            except OSError as exc:
                with lock:
                    pool_errors.append(f"adapter launch failed: {exc}")
                return
            while True:
                try:
                    i, attempt = todo.get_nowait()
                except Empty:
                    break
                t0 = time.monotonic()
                with lock:
                    self._next_id += 1
                    req_id = self._next_id
                try:
                    payload = _request_payload(
                        req_id, self.binding.problem, points[i], self._geometry_path(points[i], i)
                    )
                    y = worker.call(req_id, payload)
                except _PointFailed as exc:
                    results[i] = self._failed(points[i], str(exc), start_trial + i, time.monotonic() - t0)
                    done.release()
                    continue
                except EngineError as exc:
                    reason = f"adapter worker lost: {exc}"
                    with lock:
                        pool_errors.append(reason)
                    if attempt + 1 < MAX_ATTEMPTS:
                        todo.put((i, attempt + 1))
                    else:
                        results[i] = self._failed(points[i], reason, start_trial + i, time.monotonic() - t0)
                        done.release()
                    break
                dt = time.monotonic() - t0
                if keys[i] is not None:
                    self._cache.put(keys[i], y)
                results[i] = self._finish(points[i], y, target, start_trial + i, dt)
                done.release()
            worker.close()

        threads = [threading.Thread(target=serve, daemon=True) for _ in range(n_workers)]
        for t in threads:
            t.start()

        served = 0
        stalled = 0
        while served < queued:
            if done.acquire(timeout=0.25):
                served += 1
                stalled = 0
                continue
            if not any(t.is_alive() for t in threads):
                stalled += 1
                if stalled > 2:
                    break
        for t in threads:
            t.join(timeout=self.binding.timeout + 5.0)

        reason = "no adapter workers left"
        if pool_errors:
            reason += f" (last error: {pool_errors[-1]})"
        for i in range(n):
            if results[i] is None and i not in followers:
                # every worker died with this point still queued
                results[i] = self._failed(points[i], reason, start_trial + i, 0.0)
        for i in followers:
            t0 = time.monotonic()
            y = self._cache.get(keys[i])
            if y is None:
                results[i] = self._failed(
                    points[i], "cache leader failed", start_trial + i, 0.0
                )
            else:
                results[i] = self._finish(
                    points[i], y, target, start_trial + i, time.monotonic() - t0,
                    meta={"cache": "hit"},
                )
        return results  # type: ignore[return-value]


def evaluate_batch(
    binding: SimulatorBinding,
    points: Sequence[DesignPoint],
    target: np.ndarray | None = None,
    start_trial: int = 0,
) -> list[EvalRecord]:
    """One-shot convenience wrapper around a throwaway Engine."""
    return Engine(binding).evaluate_batch(points, target, start_trial)


def adapter_roundtrip(
    binding: SimulatorBinding,
    point: DesignPoint,
    target: np.ndarray | None = None,
) -> EvalRecord:
    """Single-point exchange with an external adapter.

    Without a target the loss is taken against the zero response.  Protocol
    violations raise instead of producing a record.
    """
    if binding.kind != "external-adapter":
        raise ValueError("adapter_roundtrip needs an external-adapter binding")
    engine = Engine(binding)
    worker = _AdapterWorker(binding.adapter_cmd, binding.timeout)
    try:
        t0 = time.monotonic()
        payload = _request_payload(1, binding.problem, point, None)
        try:
            y = worker.call(1, payload)
        except _PointFailed as exc:
            # adapter answered with an error payload; that is a valid
            # per-point outcome, not a protocol breach
            return engine._failed(point, str(exc), 0, time.monotonic() - t0)
        return engine._finish(point, y, target, 0, time.monotonic() - t0)
    finally:
        worker.close()


def throughput_curve(
    binding: SimulatorBinding,
    points: Sequence[DesignPoint],
    worker_counts: Sequence[int],
    target: np.ndarray | None = None,
) -> list[tuple[int, float]]:
    """Wall-clock seconds to evaluate `points` at each worker count."""
    out = []
    for w in worker_counts:
        engine = Engine(replace(binding, workers=w))
        t0 = time.monotonic()
        engine.evaluate_batch(points, target)
        out.append((w, time.monotonic() - t0))
    return out
