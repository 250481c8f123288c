"""Composable analysis pipelines with a content-addressed disk cache.

A Processor is a pure function with declared, typed parameters and an
identity (name + version). Pipelines thread a value through Tasks front
to back; Parallel and Sequential combine processors into trees. Any
processor given an `io` store caches its result under a SHA-256 of
(identity, params, input), so warm reruns skip the work entirely.
"""

from __future__ import annotations

import hashlib
import os
import struct
import zlib
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import blob
from .errors import (
    ArityMismatch,
    CacheCorrupt,
    TaskFailed,
    TaskTypeViolation,
    UnserializableInput,
)
from .tensor import Tensor

PARAM_KINDS = ("int", "float", "string", "bool", "int-list", "float-list")


class Param:
    """Typed parameter declared at class scope on a Processor."""

    def __init__(self, kind: str, default=None, required: bool = False):
        if kind not in PARAM_KINDS:
            raise ValueError(f"unknown param kind {kind!r}")
        self.kind = kind
        self.default = default
        self.required = required
        self.name = None

    def __set_name__(self, owner, name):
        self.name = name

    def __get__(self, obj, objtype=None):
        if obj is None:
            return self
        return obj._params[self.name]

    def check(self, value):
        kind = self.kind
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError(f"param {self.name!r} expects int, got {value!r}")
            return value
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"param {self.name!r} expects float, got {value!r}")
            return float(value)
        if kind == "string":
            if not isinstance(value, str):
                raise TypeError(f"param {self.name!r} expects str, got {value!r}")
            return value
        if kind == "bool":
            if not isinstance(value, bool):
                raise TypeError(f"param {self.name!r} expects bool, got {value!r}")
            return value
        if not isinstance(value, (list, tuple)):
            raise TypeError(f"param {self.name!r} expects a list, got {value!r}")
        if kind == "int-list":
            if any(isinstance(v, bool) or not isinstance(v, int) for v in value):
                raise TypeError(f"param {self.name!r} expects ints, got {value!r}")
            return [int(v) for v in value]
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise TypeError(f"param {self.name!r} expects floats, got {value!r}")
        return [float(v) for v in value]


# -- canonical value serialization -------------------------------------
#
# Type-tagged, little-endian, bit-stable. Tensors embed their full VZT1
# encoding; containers are length-prefixed.

def canonical_bytes(value) -> bytes:
    if isinstance(value, Tensor):
        raw = blob.encode_tensor(value)
        return b"T" + struct.pack("<I", len(raw)) + raw
    if value is None:
        return b"N"
    if isinstance(value, bool):
        return b"B" + (b"\x01" if value else b"\x00")
    if isinstance(value, int):
        if not -(2**63) <= value < 2**63:
            raise UnserializableInput(f"integer out of 64-bit range: {value}")
        return b"I" + struct.pack("<q", value)
    if isinstance(value, float):
        return b"F" + struct.pack("<d", value)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return b"S" + struct.pack("<I", len(raw)) + raw
    if isinstance(value, (list, tuple)):
        tag = b"L" if isinstance(value, list) else b"U"
        return tag + struct.pack("<I", len(value)) + b"".join(canonical_bytes(v) for v in value)
    raise UnserializableInput(f"cannot serialize {type(value).__name__}")


def _decode_value(raw: bytes, pos: int):
    if pos >= len(raw):
        raise CacheCorrupt("truncated payload")
    tag = raw[pos : pos + 1]
    pos += 1
    if tag == b"N":
        return None, pos
    if tag == b"B":
        return raw[pos] != 0, pos + 1
    if tag == b"I":
        return struct.unpack_from("<q", raw, pos)[0], pos + 8
    if tag == b"F":
        return struct.unpack_from("<d", raw, pos)[0], pos + 8
    if tag == b"S":
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        return raw[pos : pos + n].decode("utf-8"), pos + n
    if tag == b"T":
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        return blob.decode_tensor(raw[pos : pos + n]), pos + n
    if tag in (b"L", b"U"):
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        items = []
        for _ in range(n):
            item, pos = _decode_value(raw, pos)
            items.append(item)
        return (items if tag == b"L" else tuple(items)), pos
    raise CacheCorrupt(f"unknown value tag {tag!r}")


def decode_canonical(raw: bytes):
    try:
        value, pos = _decode_value(raw, 0)
    except (struct.error, IndexError, UnicodeDecodeError) as e:
        raise CacheCorrupt(f"malformed payload: {e}") from e
    if pos != len(raw):
        raise CacheCorrupt(f"{len(raw) - pos} trailing bytes in payload")
    return value


def compute_cache_key(processor_identity, params: dict, input_value) -> str:
    """SHA-256 hex over identity, version, sorted params, and the input."""
    if isinstance(processor_identity, str):
        name, version = processor_identity, ""
    else:
        name, version = processor_identity
    h = hashlib.sha256()
    h.update(canonical_bytes(name))
    h.update(canonical_bytes(str(version)))
    for k in sorted(params):
        h.update(canonical_bytes(k))
        h.update(canonical_bytes(params[k]))
    h.update(canonical_bytes(input_value))
    return h.hexdigest()


class CacheStore:
    """Disk cache: <root>/<first2hex>/<key>.bin, CRC-verified on read."""

    MAGIC = b"VZC1"

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.bin"

    def has(self, key: str) -> bool:
        return self._path(key).exists()

    def put(self, key: str, value) -> None:
        payload = canonical_bytes(value)
        raw = self.MAGIC + struct.pack("<I", zlib.crc32(payload)) + payload
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(raw)
        os.replace(tmp, path)

    def get(self, key: str):
        raw = self._path(key).read_bytes()
        if raw[:4] != self.MAGIC:
            raise CacheCorrupt(f"bad magic in cache entry {key}")
        (crc,) = struct.unpack_from("<I", raw, 4)
        payload = raw[8:]
        if zlib.crc32(payload) != crc:
            raise CacheCorrupt(f"checksum mismatch in cache entry {key}")
        return decode_canonical(payload)


# -- execution instrumentation -----------------------------------------

_ACTIVE_LOGS: list["ExecutionRecord"] = []


class ExecutionRecord:
    """Names of leaf processors that actually computed vs hit the cache."""

    def __init__(self):
        self.executed: list[str] = []
        self.cache_hits: list[str] = []


@contextmanager
def execution_log():
    rec = ExecutionRecord()
    _ACTIVE_LOGS.append(rec)
    try:
        yield rec
    finally:
        _ACTIVE_LOGS.remove(rec)


def _note(kind: str, name: str):
    for rec in _ACTIVE_LOGS:
        getattr(rec, kind).append(name)


class Processor:
    """Deterministic step with typed params and an identity for hashing.

    Subclasses declare Params at class scope and implement function().
    """

    name: Optional[str] = None
    version = 1

    def __init__(self, is_output: bool = False, io: Optional[CacheStore] = None, **param_values):
        self.is_output = is_output
        self.io = io
        specs = self._param_specs()
        for key in param_values:
            if key not in specs:
                raise TypeError(f"{type(self).__name__} has no param {key!r}")
        bound = {}
        for pname, spec in specs.items():
            if pname in param_values:
                bound[pname] = spec.check(param_values[pname])
            elif spec.required:
                raise ValueError(f"{type(self).__name__} requires param {pname!r}")
            else:
                bound[pname] = spec.default
        self._params = bound

    @classmethod
    def _param_specs(cls) -> dict[str, Param]:
        specs = {}
        for klass in reversed(cls.__mro__):
            for key, val in vars(klass).items():
                if isinstance(val, Param):
                    specs[key] = val
        return specs

    @property
    def identity(self) -> tuple[str, str]:
        return (self.name or type(self).__name__, str(self.version))

    def params(self) -> dict:
        return dict(self._params)

    def signature(self) -> str:
        """Identity plus bound params; containers append children."""
        name, version = self.identity
        parts = ",".join(f"{k}={self._params[k]!r}" for k in sorted(self._params))
        return f"{name}:{version}[{parts}]"

    def function(self, value):
        raise NotImplementedError

    def _children(self) -> Sequence["Processor"]:
        return ()

    def _run(self, value):
        """Returns (output, collected is_output values)."""
        if self.io is not None:
            key = compute_cache_key((self.signature(), self.identity[1]), self._params, value)
            if self.io.has(key):
                out = self.io.get(key)
                _note("cache_hits", self.signature())
                return out, ([out] if self.is_output else [])
            out, collected = self._compute(value)
            self.io.put(key, out)
            return out, collected
        return self._compute(value)

    def _compute(self, value):
        _note("executed", self.signature())
        out = self.function(value)
        return out, ([out] if self.is_output else [])

    def __call__(self, value):
        return self._run(value)[0]


class FunctionProcessor(Processor):
    """Wraps a plain callable; name defaults to the callable's name."""

    def __init__(self, fn: Callable, name: Optional[str] = None, version=1, **kwargs):
        super().__init__(**kwargs)
        self._fn = fn
        self.name = name or getattr(fn, "__name__", "function")
        self.version = version

    def function(self, value):
        return self._fn(value)


def _check_flag_shadowing(container: Processor):
    if container.io is None or container.is_output:
        return
    def any_flagged(p: Processor) -> bool:
        return any(c.is_output or any_flagged(c) for c in p._children())
    if any_flagged(container):
        raise ValueError(
            "a cached flow processor would hide is_output flags of its "
            "children on warm runs; flag the container itself instead"
        )


class Parallel(Processor):
    """Runs children on one broadcast input or on a matching input list."""

    def __init__(self, children: Sequence[Processor], broadcast: bool = False, **kwargs):
        super().__init__(**kwargs)
        self.children = list(children)
        self.broadcast = broadcast
        _check_flag_shadowing(self)

    def _children(self):
        return self.children

    def signature(self):
        inner = ",".join(c.signature() for c in self.children)
        return f"Parallel:{self.version}[broadcast={self.broadcast}]({inner})"

    def _compute(self, value):
        if self.broadcast:
            inputs = [value] * len(self.children)
        else:
            if not isinstance(value, (list, tuple)) or len(value) != len(self.children):
                got = len(value) if isinstance(value, (list, tuple)) else f"scalar {value!r}"
                raise ArityMismatch(f"{len(self.children)} children but input is {got}")
            inputs = list(value)
        outs, collected = [], []
        for child, item in zip(self.children, inputs):
            out, kid = child._run(item)
            outs.append(out)
            collected.extend(kid)
        return outs, ([outs] if self.is_output else collected)


class Sequential(Processor):
    """Left-to-right composition; empty composition is the identity."""

    def __init__(self, children: Sequence[Processor], **kwargs):
        super().__init__(**kwargs)
        self.children = list(children)
        _check_flag_shadowing(self)

    def _children(self):
        return self.children

    def signature(self):
        inner = ",".join(c.signature() for c in self.children)
        return f"Sequential:{self.version}[]({inner})"

    def _compute(self, value):
        collected = []
        for child in self.children:
            value, kid = child._run(value)
            collected.extend(kid)
        return value, ([value] if self.is_output else collected)


def parallel(processors: Sequence[Processor], broadcast: bool = False, **kwargs) -> Parallel:
    return Parallel(processors, broadcast=broadcast, **kwargs)


def sequential(processors: Sequence[Processor], **kwargs) -> Sequential:
    return Sequential(processors, **kwargs)


class Task:
    """Named pipeline slot with a default processor and an optional
    required processor type."""

    def __init__(self, name: str, default: Processor, allowed: Optional[type] = None):
        if allowed is not None and not isinstance(default, allowed):
            raise TaskTypeViolation(f"default for task {name!r} is not a {allowed.__name__}")
        self.name = name
        self.default = default
        self.allowed = allowed


class Pipeline:
    def __init__(self, tasks: Sequence[Task]):
        self.tasks = list(tasks)
        self._bound: dict[str, Processor] = {}

    def bind(self, task_name: str, processor: Processor) -> "Pipeline":
        for task in self.tasks:
            if task.name == task_name:
                if task.allowed is not None and not isinstance(processor, task.allowed):
                    raise TaskTypeViolation(
                        f"task {task_name!r} requires {task.allowed.__name__}, "
                        f"got {type(processor).__name__}"
                    )
                self._bound[task_name] = processor
                return self
        raise KeyError(f"no task named {task_name!r}")

    def processor_for(self, task: Task) -> Processor:
        return self._bound.get(task.name, task.default)

    def __call__(self, value):
        return run_pipeline(self, value)


def run_pipeline(pipeline: Pipeline, value):
    """Threads the input through all tasks; returns flagged outputs.

    No is_output flags anywhere: the final task's output. Exactly one
    flagged value: that value. Several: a list in execution order.
    """
    collected = []
    for task in pipeline.tasks:
        proc = pipeline.processor_for(task)
        try:
            value, kid = proc._run(value)
        except (TaskFailed,):
            raise
        except Exception as e:
            raise TaskFailed(task.name, e) from e
        collected.extend(kid)
    if not collected:
        return value
    if len(collected) == 1:
        return collected[0]
    return collected
