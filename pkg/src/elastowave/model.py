"""Build runnable models from a :class:`~elastowave.config.SimulationConfig`.

:func:`build_model` returns either an elastic (2D/3D multiblock) or a 1D
scalar model.  Both expose ``run(dt=None, lam=None, duration=None, stride=1)``
returning a :class:`ModelRun` with receiver traces and snapshots, so the
command layer treats them alike.  ``level`` refines every axis ``level``
times by halving the spacing (receivers given by location stay on nodes
because the grids are nested).
"""
from dataclasses import dataclass, field
import logging
from pathlib import Path
import time as _time

import numpy as np

from . import geometry as geo
from . import sbp
from . import timestepping as ts
from . import wave1d as w1
from .elastic import assembly as ea
from .elastic import run as er
from .elastic.stiffness import isotropic_stiffness, tti_stiffness
from .output import SnapshotRecord, TraceRecord

log = logging.getLogger(__name__)


@dataclass
class ModelRun:
    traces: dict
    snapshots: list
    dt: float
    lambda_max: float
    n_steps: int
    wall_time: float
    snap_distances: dict = field(default_factory=dict)


def refine(n, level):
    return (n - 1) * 2 ** level + 1


def _wavelet(src):
    nu0, delay, amp = src.nu0, src.delay, src.amplitude
    return lambda t: amp * ts.ricker(t, nu0, delay)


def _surface(spec, horizontal_extent):
    spec = dict(spec)
    if "level" in spec:
        return geo.FlatSurface(float(spec["level"]))
    base = float(spec.get("base", 0.0))
    if not spec.get("amplitude"):
        return geo.FlatSurface(base)
    topo = geo.gaussian_topography(int(spec.get("seed", 0)), float(spec["amplitude"]),
                                   int(spec.get("count", 6)), horizontal_extent, base=0.0)
    return topo.scaled(float(spec.get("factor", 1.0)), base=base)


def build_mapping(block):
    """Mapping of a block config (``layer`` handled here, the rest by the geometry catalogue)."""
    m = dict(block.mapping)
    name = m.pop("name")
    if name == "layer":
        if block.extent[-1] != (0.0, 1.0) and tuple(block.extent[-1]) != (0, 1):
            raise ValueError(f"block {block.name!r}: a layer mapping needs the last extent to be [0, 1]")
        hext = block.extent[:-1]
        return geo.LayerMapping(block.dim, _surface(m["bottom"], hext), _surface(m["top"], hext))
    return geo.mapping_from_config(name, m, block.dim)


def _medium(block, base_dir):
    med = block.medium
    if med["type"] == "tabulated":
        data = np.load(Path(base_dir) / med["path"])
        if block.dim == 1:
            return data["rho"], data["speed"]
        return data["rho"], data["stiffness"]
    if med["type"] == "acoustic":
        return med["rho"], med["speed"]
    if med["type"] == "isotropic":
        return med["rho"], isotropic_stiffness(med["vp"], med["vs"], med["rho"], dim=block.dim)
    return med["rho"], tti_stiffness(med["vp"], med["vs"], med["rho"], med["eps"], med["gamma"],
                                     med["delta"], med["tilt"], med["azimuth"])


def _triplets(block, scheme, level):
    out = []
    for a, (n, (lo, hi)) in enumerate(zip(block.nodes, block.extent)):
        kind = block.kinds[a] if block.kinds else scheme.kind
        out.append(sbp.build_triplet(kind, refine(n, level), p=scheme.order, a=float(lo), b=float(hi)))
    return out


def _choose_dt(model, dt, lam, duration):
    """Time step: explicit ``dt``, else ``[scheme].dt``, else the CFL step from ``lambda_max``.

    ``lambda_max`` is estimated whenever it is not supplied (it goes into the
    manifest); a prescribed step above the stability bound is rejected.
    """
    sc = model.cfg.scheme
    if lam is None:
        lam = model.lambda_max()
    limit = ts.stable_dt(lam, sc.epsilon)
    dt = dt if dt is not None else (sc.dt if sc.dt is not None else limit)
    if dt > ts.stable_dt(lam, 0.0):
        raise ValueError(f"time step {dt:.6g} exceeds the stability limit {ts.stable_dt(lam, 0.0):.6g}")
    return dt, lam


def build_model(cfg, level=0):
    if cfg.dim == 1:
        return Wave1DModel(cfg, level)
    return ElasticModel(cfg, level)


# --------------------------------------------------------------------------
# elastic models


_FACE = {"free_surface": ea.FreeSurface, "dirichlet": ea.DirichletFace, "nonreflecting": ea.NonReflectingFace}


class ElasticModel:
    def __init__(self, cfg, level=0):
        self.cfg, self.level = cfg, level
        blocks = []
        for b in cfg.blocks:
            grid = geo.build_grid(build_mapping(b), _triplets(b, cfg.scheme, level))
            rho, C = _medium(b, cfg.base_dir)
            faces = {}
            for f, fc in b.faces.items():
                faces[f] = ea.InterfaceFace(fc.block, fc.face) if fc.condition == "interface" else _FACE[fc.condition]()
            blocks.append(ea.ElasticBlock(grid, rho, C, faces, b.name))
        self.assembly = ea.assemble(blocks)
        self.snap_distances = {}
        self.sources = [self._source(cfg.source)] if cfg.source is not None else []
        self.receivers = [self._receiver(r) for r in cfg.receivers]

    def _node(self, block, location, index, what):
        if location is not None:
            node, dist = self.assembly.locate(location)
            self.snap_distances[what] = dist
            if dist > 0:
                log.info("%s snapped to node %d (distance %.6g)", what, node, dist)
            return node
        idx = tuple(i * 2 ** self.level for i in index)
        return self.assembly.global_id(block, idx)

    def _source(self, s):
        w = _wavelet(s)
        if s.type == "force":
            node = self._node(s.block, s.location, s.index, "source")
            return er.PointForce(node, np.asarray(s.vector), w)
        idx = tuple(i * 2 ** self.level for i in s.index)
        return er.Explosion(s.block, idx, s.moment, w)

    def _receiver(self, r):
        node = self._node(r.block, r.location, r.index, f"receiver {r.name}")
        return er.Receiver(r.name, node, r.components, self.snap_distances.get(f"receiver {r.name}", 0.0))

    def lambda_max(self, seed=None):
        forcing, scale = er.source_forcing(self.assembly, self.sources)
        sysm = self.assembly.system(forcing=forcing, forcing_scale=scale)
        return ts.lambda_max(sysm, seed=self.cfg.scheme.seed if seed is None else seed)

    def run(self, dt=None, lam=None, duration=None, stride=None, snapshot_times=None):
        sc, oc = self.cfg.scheme, self.cfg.output
        duration = sc.duration if duration is None else duration
        stride = oc.trace_stride if stride is None else stride
        snaps = oc.snapshot_times if snapshot_times is None else snapshot_times
        dt, lam = _choose_dt(self, dt, lam, duration)
        if duration <= 0:
            return ModelRun({}, [], float(dt) if dt else float("nan"),
                            float(lam) if lam is not None else float("nan"), 0, 0.0, dict(self.snap_distances))
        res = er.run(self.assembly, self.sources, self.receivers, duration=duration, dt=dt,
                     epsilon=sc.epsilon, lam=lam if lam is not None else 1.0, stride=stride,
                     snapshot_times=snaps, seed=sc.seed)
        traces = {name: TraceRecord(name, res.times, tr) for name, tr in res.traces.items()}
        records = []
        for t, U in res.snapshots:
            for b in range(len(self.assembly.blocks)):
                vals = self.assembly.block_field(U, b)
                if oc.snapshot_kind == "amplitude":
                    records.append(SnapshotRecord.amplitude(b, t, vals))
                else:
                    records.append(SnapshotRecord(b, t, vals.copy()))
        return ModelRun(traces, records, res.dt, float(lam) if lam is not None else float("nan"),
                        res.n_steps, res.wall_time, dict(self.snap_distances))


# --------------------------------------------------------------------------
# 1D models


class Wave1DModel:
    """Chain of 1D blocks (ordered left to right, joined by interface faces)."""

    def __init__(self, cfg, level=0):
        self.cfg, self.level = cfg, level
        blocks = cfg.blocks
        for b in range(len(blocks) - 1):
            fc = blocks[b].faces["xmax"]
            if fc.condition != "interface" or fc.block != b + 1 or fc.face != "xmin":
                raise ValueError(f"1D block {blocks[b].name!r} must join block {b + 1} through xmax -> xmin")
        self.triplets = [_triplets(b, cfg.scheme, level)[0] for b in blocks]
        self.media = []
        for b, t in zip(blocks, self.triplets):
            rho, c = _medium(b, cfg.base_dir)
            rho = np.broadcast_to(np.asarray(rho, float), (t.n_nodes,)) if np.ndim(rho) == 0 else np.asarray(rho, float)
            c = np.broadcast_to(np.asarray(c, float), (t.n_nodes,)) if np.ndim(c) == 0 else np.asarray(c, float)
            if rho.size != t.n_nodes or c.size != t.n_nodes:
                raise ValueError(f"block {b.name!r}: tabulated medium does not match {t.n_nodes} nodes")
            self.media.append(w1.Medium1D(rho.copy(), c.copy()))
        self.snap_distances = {}
        forcing = self._forcing(cfg.source)
        problems = [w1.Wave1DProblem(t, m, forcing=forcing.get(i)) for i, (t, m) in enumerate(zip(self.triplets, self.media))]
        left = self._end(blocks[0].faces["xmin"], self.media[0].speed[0], -1)
        right = self._end(blocks[-1].faces["xmax"], self.media[-1].speed[-1], +1)
        self.wsys = w1.assemble_system(problems, left, right)
        self.receivers = [(r.name, self._node(r)) for r in cfg.receivers]

    @staticmethod
    def _end(fc, c, sign):
        if fc.condition == "dirichlet":
            return w1.Dirichlet()
        if fc.condition == "neumann":
            return w1.Neumann()
        if fc.condition == "nonreflecting":
            return w1.NonReflecting(sign * float(c))
        raise ValueError(f"unsupported outer 1D condition {fc.condition!r}")

    def _forcing(self, s):
        if s is None:
            return {}
        t = self.triplets[s.block]
        w = _wavelet(s)
        if s.type == "gaussian":
            center = s.location[0] if s.location is not None else float(t.nodes[s.index[0] * 2 ** self.level])
            return {s.block: w1.gaussian_source(t, center, s.width, w)}
        if s.location is not None:
            i = int(np.argmin(np.abs(t.nodes - s.location[0])))
            self.snap_distances["source"] = float(abs(t.nodes[i] - s.location[0]))
        else:
            i = s.index[0] * 2 ** self.level
        return {s.block: w1.point_source(t, i + 1, w)}

    def _node(self, r):
        x = self.wsys.x
        if r.location is not None:
            i = int(np.argmin(np.abs(x - r.location[0])))
            self.snap_distances[f"receiver {r.name}"] = float(abs(x[i] - r.location[0]))
            return i
        return self.wsys.offsets[r.block] + r.index[0] * 2 ** self.level

    def lambda_max(self, seed=None):
        return ts.lambda_max(self.wsys.system, seed=self.cfg.scheme.seed if seed is None else seed)

    def run(self, dt=None, lam=None, duration=None, stride=None, snapshot_times=None):
        sc, oc = self.cfg.scheme, self.cfg.output
        duration = sc.duration if duration is None else duration
        stride = oc.trace_stride if stride is None else stride
        dt, lam = _choose_dt(self, dt, lam, duration)
        lam_out = float(lam) if lam is not None else float("nan")
        if duration <= 0:
            return ModelRun({}, [], float(dt) if dt else float("nan"), lam_out, 0, 0.0, dict(self.snap_distances))
        t0 = _time.perf_counter()
        n_steps = int(round(duration / dt))
        stepper = ts.Stepper(self.wsys.system, dt)
        times, rec = [], {name: [] for name, _ in self.receivers}
        pending = sorted(float(t) for t in (oc.snapshot_times if snapshot_times is None else snapshot_times))
        snaps = []

        def sample(st):
            u = None
            if st.step_index % stride == 0:
                u = self.wsys.full(st.u_curr, st.time)
                times.append(st.time)
                for name, node in self.receivers:
                    rec[name].append(u[node])
            while pending and st.time >= pending[0] - 1e-12:
                u = self.wsys.full(st.u_curr, st.time) if u is None else u
                snaps.append(SnapshotRecord(0, st.time, u[:, None].copy()))
                pending.pop(0)

        sample(stepper.state)
        stepper.run(n_steps - stepper.state.step_index, sample)
        traces = {name: TraceRecord(name, times, np.array(v)[:, None]) for name, v in rec.items()}
        return ModelRun(traces, snaps, float(dt), lam_out, n_steps, _time.perf_counter() - t0,
                        dict(self.snap_distances))
