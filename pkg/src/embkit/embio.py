"""On-disk formats: EMB1 embedding files, JSONL manifests, pairs CSV, run config.

EMB1 layout (little-endian)::

    b"EMB1" | count: uint32 | dim: uint32 | count*dim float32, row-major
"""

import csv
import json
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .domainshift import ShiftVector
from .evalkit import VerificationPair
from .exceptions import (
    BadMagic,
    BadManifest,
    ConfigError,
    DuplicateRow,
    EmbkitError,
    IndexOutOfRange,
    InvalidParameter,
    NaNPayload,
    OutputExists,
    TruncatedFile,
)

MAGIC = b"EMB1"
HEADER = struct.Struct("<4sII")
DTYPE = np.dtype("<f4")
ENV_PREFIX = "EMBKIT_"


def _atomic_write(path, data, force):
    path = Path(path)
    if path.exists() and not force:
        raise OutputExists("refusing to overwrite without force", file=path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_finite(X, path=None):
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if bad.size:
        raise NaNPayload("non-finite value in payload", file=path, row=int(bad[0]))


def emb_bytes(X):
    X = np.asarray(X)
    if X.ndim != 2:
        raise InvalidParameter(f"expected a 2-D matrix, got shape {X.shape}")
    X32 = np.ascontiguousarray(X, dtype=DTYPE)
    _check_finite(X32)
    return HEADER.pack(MAGIC, X32.shape[0], X32.shape[1]) + X32.tobytes()


def write_emb(path, X, force=False):
    """Write a ``(count, dim)`` matrix as EMB1 (values cast to float32)."""
    try:
        data = emb_bytes(X)
    except EmbkitError as exc:
        exc.file = str(path)
        raise
    _atomic_write(path, data, force)


def read_emb(path):
    """Read an EMB1 file into a ``(count, dim)`` float32 array."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        if len(raw) >= 4 and raw[:4] != MAGIC:
            raise BadMagic(f"magic {raw[:4]!r} is not {MAGIC!r}", file=path)
        raise TruncatedFile(f"{len(raw)} bytes is shorter than the {HEADER.size}-byte header", file=path)
    magic, count, dim = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"magic {magic!r} is not {MAGIC!r}", file=path)
    expected = HEADER.size + 4 * count * dim
    if len(raw) != expected:
        raise TruncatedFile(
            f"size {len(raw)} does not match header count={count} dim={dim} (expected {expected})",
            file=path)
    X = np.frombuffer(raw, dtype=DTYPE, offset=HEADER.size).reshape(count, dim).copy()
    _check_finite(X, path)
    return X


def jsonl_bytes(rows):
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows).encode("utf-8")


def write_jsonl(path, rows, force=False):
    _atomic_write(path, jsonl_bytes(rows), force)


def read_labels(path, count=None):
    """Read a JSONL label manifest; returns the row dicts in file order.

    Each line needs a string ``label`` and an integer ``row``; any other keys
    are kept untouched.
    """
    rows, seen = [], {}
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BadManifest(f"invalid JSON: {exc.msg}", file=path, row=i) from None
            if not isinstance(rec, dict) or not isinstance(rec.get("label"), str):
                raise BadManifest("entry needs a string 'label'", file=path, row=i)
            r = rec.get("row")
            if not isinstance(r, int) or isinstance(r, bool):
                raise BadManifest("entry needs an integer 'row'", file=path, row=i)
            if r in seen:
                raise DuplicateRow(f"row {r} already mapped on entry {seen[r]}", file=path, row=i)
            if r < 0 or (count is not None and r >= count):
                raise IndexOutOfRange(f"row {r} outside [0, {count})", file=path, row=i)
            seen[r] = i
            rows.append(rec)
    return rows


def labelled_rows(X, manifest):
    """``(labels, vectors)`` for the manifest entries, in manifest order."""
    idx = np.array([rec["row"] for rec in manifest], dtype=np.int64)
    return [rec["label"] for rec in manifest], np.asarray(X, dtype=np.float64)[idx]


def read_pairs(path, count=None):
    """Read a pairs CSV with header ``a,b,label[,group][,fold]``."""
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in ("a", "b", "label") if c not in cols]
        if missing:
            raise BadManifest(f"pairs header lacks {missing}", file=path)
        has_group, has_fold = "group" in cols, "fold" in cols
        for i, rec in enumerate(reader):
            try:
                a, b = int(rec["a"]), int(rec["b"])
                fold = int(rec["fold"]) if has_fold else None
            except (TypeError, ValueError):
                raise BadManifest("a, b and fold must be integers", file=path, row=i) from None
            if rec["label"] not in ("0", "1"):
                raise BadManifest(f"label must be 1 or 0, got {rec['label']!r}", file=path, row=i)
            if a == b:
                raise BadManifest("pair compares a row with itself", file=path, row=i)
            for v in (a, b):
                if v < 0 or (count is not None and v >= count):
                    raise IndexOutOfRange(f"index {v} outside [0, {count})", file=path, row=i)
            group = rec["group"] if has_group and rec["group"] != "" else None
            pairs.append(VerificationPair(a, b, rec["label"] == "1", group, fold))
    return pairs


def pairs_bytes(pairs):
    has_group = any(p.group is not None for p in pairs)
    has_fold = all(p.fold is not None for p in pairs) and bool(pairs)
    header = ["a", "b", "label"] + (["group"] if has_group else []) + (["fold"] if has_fold else [])
    lines = [",".join(header)]
    for p in pairs:
        row = [str(p.a), str(p.b), "1" if p.genuine else "0"]
        if has_group:
            row.append("" if p.group is None else p.group)
        if has_fold:
            row.append(str(p.fold))
        lines.append(",".join(row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def csv_bytes(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def shift_sidecar(path):
    return Path(str(path) + ".json")


def write_shift(path, shift, strength=1.0, force=False):
    """EMB1 with one row plus a JSON sidecar holding counts and strength."""
    write_emb(path, shift.delta.reshape(1, -1), force=force)
    meta = {"source_count": shift.source_count, "target_count": shift.target_count,
            "strength": float(strength)}
    _atomic_write(shift_sidecar(path), (json.dumps(meta) + "\n").encode(), force)


def read_shift(path):
    X = read_emb(path)
    if X.shape[0] != 1:
        raise BadManifest(f"shift file must hold exactly one row, found {X.shape[0]}", file=path)
    meta = {"source_count": 1, "target_count": 1, "strength": 1.0}
    side = shift_sidecar(path)
    if side.exists():
        try:
            meta.update(json.loads(side.read_text()))
        except json.JSONDecodeError as exc:
            raise BadManifest(f"invalid sidecar JSON: {exc.msg}", file=side) from None
    shift = ShiftVector(X[0].astype(np.float64), int(meta["source_count"]), int(meta["target_count"]))
    return shift, float(meta["strength"])


@dataclass
class RunConfig:
    global_seed: int = 0
    images_per_id: int = 20
    alpha: float = 2.0
    beta: float = 2.0
    sources_per_id: int = 5
    shift_strength: float = 1.0
    top_k_identities: Optional[int] = None
    far_target: float = 1e-4
    folds: int = 10

    def validate(self):
        def bad(key, why):
            raise ConfigError(f"{key}={getattr(self, key)!r}: {why}")

        if not 0 <= self.global_seed < 2 ** 64:
            bad("global_seed", "must be a 64-bit unsigned integer")
        for key in ("images_per_id", "sources_per_id"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        for key in ("alpha", "beta"):
            v = getattr(self, key)
            if not (v > 0 and math.isfinite(v)):
                bad(key, "must be a positive finite number")
        if not math.isfinite(self.shift_strength):
            bad("shift_strength", "must be finite")
        if self.top_k_identities is not None and self.top_k_identities < 1:
            bad("top_k_identities", "must be >= 1")
        if not 0 < self.far_target < 1:
            bad("far_target", "must lie in (0, 1)")
        if self.folds < 2:
            bad("folds", "must be >= 2")
        return self

    def to_dict(self):
        return asdict(self)


_FIELD_TYPES = {"global_seed": int, "images_per_id": int, "alpha": float, "beta": float,
                "sources_per_id": int, "shift_strength": float, "top_k_identities": int,
                "far_target": float, "folds": int}


def _coerce(key, value, source):
    kind = _FIELD_TYPES[key]
    if value is None:
        if key == "top_k_identities":
            return None
        raise ConfigError(f"{key} may not be null", file=source)
    if isinstance(value, str):
        value = yaml.safe_load(value) if value.strip() else None
        if value is None and key == "top_k_identities":
            return None
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected {kind.__name__}, got a boolean", file=source)
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}", file=source)
        return value
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}", file=source)
    return float(value)


def load_config(path=None, environ=None, **overrides):
    """Build a :class:`RunConfig` from defaults, a file, the environment and overrides.

    Later sources win. The file is a flat YAML/JSON mapping; environment
    variables are ``EMBKIT_<KEY>``. Unknown file keys are rejected.
    """
    values = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config: {exc}".splitlines()[0], file=path) from None
        doc = {} if doc is None else doc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a flat key-value mapping", file=path)
        unknown = sorted(set(doc) - set(_FIELD_TYPES))
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}", file=path)
        for k, v in doc.items():
            values[k] = _coerce(k, v, path)
    env = os.environ if environ is None else environ
    for key in _FIELD_TYPES:
        name = ENV_PREFIX + key.upper()
        if name in env:
            values[key] = _coerce(key, env[name], name)
    for key, v in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if v is not None:
            values[key] = _coerce(key, v, None)
    cfg = RunConfig(**values).validate()
    cfg.explicit = frozenset(values)
    return cfg


class OutputSet:
    """Stage several output files and publish them together.

    Inside the ``with`` block, write to :meth:`stage` paths. On success the
    staged files replace their targets; on any error they are removed, so no
    partial output survives.
    """

    def __init__(self, force=False):
        self.force = force
        self._staged = []

    def check(self, *paths):
        for p in paths:
            if p is not None and Path(p).exists() and not self.force:
                raise OutputExists("refusing to overwrite without --force", file=p)

    def stage(self, path):
        path = Path(path)
        self.check(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        os.close(fd)
        self._staged.append((Path(tmp), path))
        return Path(tmp)

    def write(self, path, data):
        tmp = self.stage(path)
        tmp.write_bytes(data)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self._discard()
            return False
        done = []
        try:
            for tmp, final in self._staged:
                os.replace(tmp, final)
                done.append(final)
        except BaseException:
            for final in done:
                final.unlink(missing_ok=True)
            self._discard()
            raise
        return False

    def _discard(self):
        for tmp, _ in self._staged:
            tmp.unlink(missing_ok=True)


__all__ = [
    "MAGIC",
    "read_emb",
    "write_emb",
    "emb_bytes",
    "read_labels",
    "write_jsonl",
    "jsonl_bytes",
    "labelled_rows",
    "read_pairs",
    "pairs_bytes",
    "csv_bytes",
    "read_shift",
    "write_shift",
    "RunConfig",
    "load_config",
    "OutputSet",
]
