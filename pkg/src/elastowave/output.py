"""Trace, snapshot and manifest files.

* Traces are CSV with header ``t,u1,u2[,u3]`` and 17 significant digits, so
  reparsing reproduces the doubles exactly.
* Snapshots use the ``EWSNAP01`` binary layout: the 8-byte magic, then
  little-endian ``uint32`` values ``d, N_1, ..., N_d, n_components``, then
  ``float32`` values with axis 1 varying fastest and the component index
  slowest.
* The manifest is JSON (config hash, seed, time step, lambda_max, wall time).
"""
from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"EWSNAP01"


@dataclass
class TraceRecord:
    """Receiver trace: ``times`` (monotone) and ``values`` of shape ``(n_times, n_components)``."""

    name: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.values = np.asarray(self.values, float).reshape(len(self.times), -1)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"trace {self.name!r} contains non-finite values")


@dataclass
class SnapshotRecord:
    """One block's field at one time: ``values`` of shape ``(*dims, n_components)``."""

    block: int
    time: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim < 2:
            raise ValueError("snapshot values need shape (*dims, n_components)")

    @property
    def dims(self):
        return self.values.shape[:-1]

    @classmethod
    def amplitude(cls, block, time, values):
        """Snapshot of the amplitude ``sqrt(sum_i u_i^2)`` (one component)."""
        v = np.asarray(values, float)
        return cls(block, time, np.sqrt(np.sum(v ** 2, axis=-1))[..., None])


def write_trace(record, path):
    path = Path(path)
    ncomp = record.values.shape[1]
    header = ",".join(["t"] + [f"u{i + 1}" for i in range(ncomp)])
    data = np.column_stack([record.times, record.values])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    return path


def read_trace(path, name=None):
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "t" or any(h != f"u{i + 1}" for i, h in enumerate(header[1:])):
        raise ValueError(f"{path}: not a trace file (header {header})")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2).reshape(-1, len(header))
    return TraceRecord(name or path.stem, data[:, 0], data[:, 1:])


def snapshot_bytes(record):
    v = np.asarray(record.values, dtype="<f4")
    dims = v.shape[:-1]
    head = np.array((len(dims),) + tuple(dims) + (v.shape[-1],), dtype="<u4")
    # Fortran order of (*dims, ncomp): axis 1 fastest, component slowest
    return SNAPSHOT_MAGIC + head.tobytes() + v.ravel(order="F").tobytes()


def write_snapshot(record, path):
    path = Path(path)
    path.write_bytes(snapshot_bytes(record))
    return path


def read_snapshot(path, block=0, time=float("nan")):
    raw = Path(path).read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:8]!r}")
    d = int(np.frombuffer(raw, "<u4", 1, 8)[0])
    head = np.frombuffer(raw, "<u4", d + 2, 8)
    dims, ncomp = tuple(int(n) for n in head[1:d + 1]), int(head[d + 1])
    off = 8 + 4 * (d + 2)
    count = int(np.prod(dims)) * ncomp
    if len(raw) != off + 4 * count:
        raise ValueError(f"{path}: expected {off + 4 * count} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, "<f4", count, off)
    values = flat.reshape(dims + (ncomp,), order="F")
    return SnapshotRecord(block, time, values.astype(np.float32))


def write_manifest(path, **entries):
    path = Path(path)
    path.write_text(json.dumps(entries, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
