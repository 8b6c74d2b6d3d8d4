"""Simulation configuration: TOML schema, validation and round-trip serialization.

A configuration file has the sections

``[scheme]``
    ``order``, ``kind`` (``shifted``/``symmetric``/``gll``), ``epsilon``,
    ``duration``, ``dt`` (omit for the automatic CFL step), ``seed``.
``[[block]]`` (repeated)
    ``name``, ``nodes``, ``extent`` (one ``[lo, hi]`` pair per axis),
    optional ``kinds`` per axis, ``mapping`` table (``name`` plus parameters),
    ``medium`` table and a ``faces`` table assigning a condition to every face.
``[source]``
    ``type`` (``force``/``explosion`` in 2D/3D, ``point``/``gaussian`` in 1D),
    ``location`` (snapped to the nearest node) or ``block`` + ``index``,
    ``vector``/``moment``/``amplitude``, ``nu0`` and optional ``delay``.
``[[receiver]]`` (repeated)
    ``name`` and ``location`` (snapped) or ``block`` + ``index``.
``[output]``
    ``directory``, ``trace_stride``, ``snapshot_times``, ``snapshot_kind``.
``[manufactured]`` (optional)
    a 1D manufactured-solution convergence problem (``p``, ``kind``, ``bc``,
    ``n0``, ``t_end``) used by the ``convergence`` command.

Face conditions are strings (``free_surface``, ``dirichlet``,
``nonreflecting``, ``neumann``) or tables ``{type = "interface", block = 1,
face = "zmax"}``.  :func:`parse_config` collects every problem it finds and
raises :class:`ConfigError` with the full list.
"""
from dataclasses import asdict, dataclass, field
import hashlib
import json
from pathlib import Path
import sys

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .geometry import FACE_NAMES

KINDS = ("shifted", "symmetric", "gll")
ORDERS = (4, 6, 8)
FACE_CONDITIONS = ("free_surface", "dirichlet", "nonreflecting", "neumann", "interface")
SOURCE_TYPES_ND = ("force", "explosion")
SOURCE_TYPES_1D = ("point", "gaussian")
MEDIUM_TYPES = ("isotropic", "tti", "acoustic", "tabulated")
MAPPINGS = ("identity", "affine", "scaling", "shear", "oblique", "layer")
SNAPSHOT_KINDS = ("components", "amplitude")

_SECTION_KEYS = {
    "scheme": {"order", "kind", "epsilon", "duration", "dt", "seed"},
    "block": {"name", "nodes", "extent", "kinds", "mapping", "medium", "faces"},
    "source": {"type", "block", "location", "index", "vector", "moment", "amplitude", "width",
               "nu0", "delay"},
    "receiver": {"name", "block", "location", "index", "components"},
    "output": {"directory", "trace_stride", "snapshot_times", "snapshot_kind"},
    "manufactured": {"p", "kind", "bc", "n0", "t_end"},
}
_MEDIUM_KEYS = {
    "isotropic": {"type", "vp", "vs", "rho"},
    "tti": {"type", "vp", "vs", "rho", "eps", "gamma", "delta", "tilt", "azimuth"},
    "acoustic": {"type", "rho", "speed"},
    "tabulated": {"type", "path"},
}
_REQUIRED = ("scheme", "block")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class SchemeConfig:
    order: int = 8
    kind: str = "shifted"
    epsilon: float = 0.1
    duration: float = 1.0
    dt: float = None
    seed: int = 20240531


@dataclass
class FaceConfig:
    condition: str
    block: int = None
    face: str = None

    def to_toml(self):
        if self.condition == "interface":
            return {"type": "interface", "block": self.block, "face": self.face}
        return self.condition


@dataclass
class BlockConfig:
    name: str
    nodes: tuple
    extent: tuple
    medium: dict
    faces: dict
    mapping: dict = field(default_factory=lambda: {"name": "identity"})
    kinds: tuple = None

    @property
    def dim(self):
        return len(self.nodes)


@dataclass
class SourceConfig:
    type: str
    nu0: float = 10.0
    block: int = 0
    location: tuple = None
    index: tuple = None
    vector: tuple = None
    moment: float = None
    amplitude: float = 1.0
    width: float = None
    delay: float = None


@dataclass
class ReceiverConfig:
    name: str
    block: int = 0
    location: tuple = None
    index: tuple = None
    components: tuple = None


@dataclass
class OutputConfig:
    directory: str = "output"
    trace_stride: int = 1
    snapshot_times: tuple = ()
    snapshot_kind: str = "components"


@dataclass
class ManufacturedConfig:
    p: int = 4
    kind: str = "shifted"
    bc: str = "periodic"
    n0: int = 21
    t_end: float = 0.5


@dataclass
class SimulationConfig:
    scheme: SchemeConfig
    blocks: list
    source: SourceConfig = None
    receivers: list = field(default_factory=list)
    output: OutputConfig = field(default_factory=OutputConfig)
    manufactured: ManufacturedConfig = None
    base_dir: str = field(default=".", compare=False)

    @property
    def dim(self):
        return self.blocks[0].dim

    def to_dict(self):
        return config_to_dict(self)

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    def hash(self):
        """SHA-256 of the canonical (sorted JSON) form of the configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------
# parsing


def _tuple(v):
    return tuple(_tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, (list, tuple)) else v


def _unknown(table, allowed, where, errors):
    for k in sorted(set(table) - set(allowed)):
        errors.append(f"{where}: unknown key {k!r}")


def _number(table, key, where, errors, positive=False, nonnegative=False, integer=False, default=None):
    if key not in table:
        return default
    v = table[key]
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        errors.append(f"{where}.{key}: expected {'an integer' if integer else 'a number'}, got {v!r}")
        return default
    if positive and not v > 0:
        errors.append(f"{where}.{key}: must be positive, got {v!r}")
    if nonnegative and not v >= 0:
        errors.append(f"{where}.{key}: must be nonnegative, got {v!r}")
    return v


def _parse_scheme(tab, errors):
    _unknown(tab, _SECTION_KEYS["scheme"], "scheme", errors)
    sc = SchemeConfig()
    sc.order = _number(tab, "order", "scheme", errors, integer=True, default=sc.order)
    if sc.order not in ORDERS:
        errors.append(f"scheme.order: must be one of {ORDERS}, got {sc.order!r}")
    sc.kind = tab.get("kind", sc.kind)
    if sc.kind not in KINDS:
        errors.append(f"scheme.kind: must be one of {KINDS}, got {sc.kind!r}")
    sc.epsilon = _number(tab, "epsilon", "scheme", errors, nonnegative=True, default=sc.epsilon)
    sc.duration = _number(tab, "duration", "scheme", errors, nonnegative=True, default=sc.duration)
    sc.dt = _number(tab, "dt", "scheme", errors, positive=True, default=None)
    sc.seed = _number(tab, "seed", "scheme", errors, integer=True, default=sc.seed)
    return sc


def _parse_face(value, where, errors):
    if isinstance(value, str):
        if value == "interface":
            errors.append(f"{where}: interface faces need a table {{type, block, face}}")
            return None
        if value not in FACE_CONDITIONS:
            errors.append(f"{where}: unknown condition {value!r}")
            return None
        return FaceConfig(value)
    if isinstance(value, dict):
        _unknown(value, {"type", "block", "face"}, where, errors)
        if value.get("type") != "interface":
            errors.append(f"{where}: table faces must have type = 'interface'")
            return None
        blk, face = value.get("block"), value.get("face")
        if not isinstance(blk, int) or isinstance(blk, bool):
            errors.append(f"{where}: interface block must be an integer index")
            return None
        if face not in FACE_NAMES:
            errors.append(f"{where}: interface face {face!r} is not a face name")
            return None
        return FaceConfig("interface", blk, face)
    errors.append(f"{where}: expected a condition name or an interface table, got {value!r}")
    return None


def _parse_medium(tab, dim, where, errors):
    if not isinstance(tab, dict):
        errors.append(f"{where}: expected a table")
        return None
    mtype = tab.get("type")
    if mtype not in MEDIUM_TYPES:
        errors.append(f"{where}.type: must be one of {MEDIUM_TYPES}, got {mtype!r}")
        return None
    _unknown(tab, _MEDIUM_KEYS[mtype], where, errors)
    if mtype == "acoustic" and dim != 1:
        errors.append(f"{where}: acoustic media are 1D only")
    if mtype in ("isotropic", "tti") and dim == 1:
        errors.append(f"{where}: {mtype} media need a 2D or 3D block")
    if mtype == "tti" and dim != 3:
        errors.append(f"{where}: tti media need a 3D block")
    for k in sorted(_MEDIUM_KEYS[mtype] - {"type", "path"}):
        if k not in tab:
            errors.append(f"{where}: missing {k!r}")
            continue
        v = tab[k]
        if mtype == "acoustic" and isinstance(v, list):
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                errors.append(f"{where}.{k}: expected numbers")
            continue
        _number(tab, k, where, errors, positive=k in ("vp", "vs", "rho", "speed"))
    if mtype == "isotropic" and all(isinstance(tab.get(k), (int, float)) for k in ("vp", "vs")):
        if not tab["vp"] > np.sqrt(2.0) * tab["vs"]:
            errors.append(f"{where}: need vp > sqrt(2) vs (positive lambda)")
    if mtype == "tabulated" and not isinstance(tab.get("path"), str):
        errors.append(f"{where}: tabulated media need a 'path' to an .npz file")
    return dict(tab)


def _parse_block(i, tab, errors):
    where = f"block[{i}]"
    if not isinstance(tab, dict):
        errors.append(f"{where}: expected a table")
        return None
    _unknown(tab, _SECTION_KEYS["block"], where, errors)
    nodes = tab.get("nodes")
    if not (isinstance(nodes, list) and 1 <= len(nodes) <= 3
            and all(isinstance(n, int) and not isinstance(n, bool) for n in nodes)):
        errors.append(f"{where}.nodes: expected a list of 1 to 3 integers")
        return None
    dim = len(nodes)
    for n in nodes:
        if n < 2:
            errors.append(f"{where}.nodes: need at least 2 nodes per axis, got {n}")
    extent = tab.get("extent")
    if not (isinstance(extent, list) and len(extent) == dim
            and all(isinstance(e, list) and len(e) == 2 for e in extent)):
        errors.append(f"{where}.extent: expected {dim} [lo, hi] pairs")
        extent = [[0.0, 1.0]] * dim
    else:
        for a, (lo, hi) in enumerate(extent):
            if not (isinstance(lo, (int, float)) and isinstance(hi, (int, float)) and hi > lo):
                errors.append(f"{where}.extent[{a}]: need numbers with hi > lo")
    kinds = tab.get("kinds")
    if kinds is not None:
        if not (isinstance(kinds, list) and len(kinds) == dim and all(k in KINDS for k in kinds)):
            errors.append(f"{where}.kinds: expected {dim} entries from {KINDS}")
            kinds = None
    mapping = tab.get("mapping", {"name": "identity"})
    if not isinstance(mapping, dict) or mapping.get("name") not in MAPPINGS:
        errors.append(f"{where}.mapping: expected a table whose name is one of {MAPPINGS}")
        mapping = {"name": "identity"}
    medium = _parse_medium(tab.get("medium"), dim, f"{where}.medium", errors) if "medium" in tab else None
    if medium is None and "medium" not in tab:
        errors.append(f"{where}: missing 'medium'")
    faces_tab = tab.get("faces", {})
    faces = {}
    if not isinstance(faces_tab, dict):
        errors.append(f"{where}.faces: expected a table")
        faces_tab = {}
    valid = FACE_NAMES[:2 * dim]
    for f, v in faces_tab.items():
        if f not in valid:
            errors.append(f"{where}.faces: {f!r} is not a face of a {dim}D block")
            continue
        fc = _parse_face(v, f"{where}.faces.{f}", errors)
        if fc is not None:
            faces[f] = fc
    for f in valid:
        if f not in faces_tab:
            errors.append(f"{where}.faces: no condition assigned to {f!r}")
    for f, fc in faces.items():
        if dim == 1 and fc.condition == "free_surface":
            errors.append(f"{where}.faces.{f}: use 'neumann' for a traction-free 1D end")
        if dim > 1 and fc.condition == "neumann":
            errors.append(f"{where}.faces.{f}: use 'free_surface' for traction-free elastic faces")
    return BlockConfig(str(tab.get("name", f"block{i}")), tuple(nodes), _tuple(extent), medium, faces,
                       dict(mapping), tuple(kinds) if kinds else None)


def _check_interfaces(blocks, errors):
    for b, blk in enumerate(blocks):
        for f, fc in blk.faces.items():
            if fc.condition != "interface":
                continue
            here = f"{blk.name}.{f}"
            if not 0 <= fc.block < len(blocks) or fc.block == b:
                errors.append(f"{here}: interface peer block {fc.block} does not exist")
                continue
            peer = blocks[fc.block]
            there = f"{peer.name}.{fc.face}"
            back = peer.faces.get(fc.face)
            if back is None or back.condition != "interface" or back.block != b or back.face != f:
                errors.append(f"interface pairing is not reciprocal: {here} -> {there}, "
                              f"but {there} does not point back to {here}")
    dims = {blk.dim for blk in blocks}
    if len(dims) > 1:
        errors.append(f"all blocks must have the same dimension, got {sorted(dims)}")


def _parse_point(tab, where, dim, errors):
    loc, idx = tab.get("location"), tab.get("index")
    if (loc is None) == (idx is None):
        errors.append(f"{where}: give exactly one of 'location' and 'index'")
        return None, None
    if loc is not None:
        if not (isinstance(loc, list) and len(loc) == dim):
            errors.append(f"{where}.location: expected {dim} coordinates")
            return None, None
        return tuple(float(v) for v in loc), None
    if not (isinstance(idx, list) and len(idx) == dim and all(isinstance(v, int) for v in idx)):
        errors.append(f"{where}.index: expected {dim} integers")
        return None, None
    return None, tuple(idx)


def _parse_source(tab, dim, nblocks, errors):
    _unknown(tab, _SECTION_KEYS["source"], "source", errors)
    allowed = SOURCE_TYPES_1D if dim == 1 else SOURCE_TYPES_ND
    stype = tab.get("type")
    if stype not in allowed:
        errors.append(f"source.type: must be one of {allowed} for a {dim}D model, got {stype!r}")
    loc, idx = _parse_point(tab, "source", dim, errors)
    src = SourceConfig(str(stype), location=loc, index=idx)
    src.block = _number(tab, "block", "source", errors, integer=True, default=0)
    if src.block is not None and not 0 <= src.block < nblocks:
        errors.append(f"source.block: no block {src.block}")
    src.nu0 = _number(tab, "nu0", "source", errors, positive=True, default=10.0)
    src.delay = _number(tab, "delay", "source", errors, default=None)
    src.amplitude = _number(tab, "amplitude", "source", errors, default=1.0)
    src.width = _number(tab, "width", "source", errors, positive=True, default=None)
    if stype == "force":
        vec = tab.get("vector")
        if not (isinstance(vec, list) and len(vec) == dim):
            errors.append(f"source.vector: a force needs {dim} components")
        else:
            src.vector = tuple(float(v) for v in vec)
    if stype == "explosion":
        src.moment = _number(tab, "moment", "source", errors, default=None)
        if src.moment is None:
            errors.append("source.moment: an explosion needs a moment")
        if idx is None:
            errors.append("source: an explosion is placed by 'block' + 'index'")
    if stype == "gaussian" and src.width is None:
        errors.append("source.width: a gaussian source needs a width")
    return src


def _parse_receivers(tabs, dim, nblocks, errors):
    out, names = [], set()
    for i, tab in enumerate(tabs):
        where = f"receiver[{i}]"
        if not isinstance(tab, dict):
            errors.append(f"{where}: expected a table")
            continue
        _unknown(tab, _SECTION_KEYS["receiver"], where, errors)
        name = tab.get("name")
        if not isinstance(name, str) or not name:
            errors.append(f"{where}: missing 'name'")
            continue
        if name in names:
            errors.append(f"{where}: duplicate receiver name {name!r}")
        names.add(name)
        loc, idx = _parse_point(tab, where, dim, errors)
        blk = _number(tab, "block", where, errors, integer=True, default=0)
        if blk is not None and not 0 <= blk < nblocks:
            errors.append(f"{where}.block: no block {blk}")
        comps = tab.get("components")
        if comps is not None:
            if not (isinstance(comps, list) and all(isinstance(c, int) and 0 <= c < dim for c in comps)):
                errors.append(f"{where}.components: expected component indices below {dim}")
                comps = None
            else:
                comps = tuple(comps)
        out.append(ReceiverConfig(name, blk, loc, idx, comps))
    return out


def _parse_output(tab, errors):
    _unknown(tab, _SECTION_KEYS["output"], "output", errors)
    oc = OutputConfig()
    oc.directory = str(tab.get("directory", oc.directory))
    oc.trace_stride = _number(tab, "trace_stride", "output", errors, positive=True, integer=True, default=1)
    st = tab.get("snapshot_times", [])
    if not (isinstance(st, list) and all(isinstance(v, (int, float)) and v >= 0 for v in st)):
        errors.append("output.snapshot_times: expected a list of nonnegative times")
        st = []
    oc.snapshot_times = tuple(float(v) for v in st)
    oc.snapshot_kind = tab.get("snapshot_kind", oc.snapshot_kind)
    if oc.snapshot_kind not in SNAPSHOT_KINDS:
        errors.append(f"output.snapshot_kind: must be one of {SNAPSHOT_KINDS}")
    return oc


def _parse_manufactured(tab, errors):
    _unknown(tab, _SECTION_KEYS["manufactured"], "manufactured", errors)
    mc = ManufacturedConfig()
    mc.p = _number(tab, "p", "manufactured", errors, integer=True, default=mc.p)
    if mc.p not in ORDERS:
        errors.append(f"manufactured.p: must be one of {ORDERS}")
    mc.kind = tab.get("kind", mc.kind)
    if mc.kind not in ("shifted", "symmetric"):
        errors.append("manufactured.kind: must be 'shifted' or 'symmetric'")
    mc.bc = tab.get("bc", mc.bc)
    if mc.bc not in ("dirichlet", "neumann", "periodic"):
        errors.append("manufactured.bc: must be 'dirichlet', 'neumann' or 'periodic'")
    mc.n0 = _number(tab, "n0", "manufactured", errors, integer=True, positive=True, default=mc.n0)
    mc.t_end = _number(tab, "t_end", "manufactured", errors, positive=True, default=mc.t_end)
    return mc


def config_from_dict(data, base_dir="."):
    """Validate a parsed TOML document; raise :class:`ConfigError` listing all problems."""
    errors = []
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a table"])
    for k in sorted(set(data) - set(_SECTION_KEYS)):
        errors.append(f"unknown section {k!r}")
    for k in _REQUIRED:
        if k not in data:
            errors.append(f"missing required section [{k}]" if k == "scheme" else "missing required section [[block]]")
    scheme = _parse_scheme(data.get("scheme", {}), errors) if isinstance(data.get("scheme", {}), dict) else None
    raw_blocks = data.get("block", [])
    if isinstance(raw_blocks, dict):
        raw_blocks = [raw_blocks]
    blocks = [b for b in (_parse_block(i, t, errors) for i, t in enumerate(raw_blocks)) if b is not None]
    if blocks:
        _check_interfaces(blocks, errors)
    dim = blocks[0].dim if blocks else 0
    source = None
    if "source" in data:
        source = _parse_source(data["source"], dim, len(blocks), errors)
    receivers = _parse_receivers(data.get("receiver", []), dim, len(blocks), errors)
    output = _parse_output(data.get("output", {}), errors)
    manufactured = _parse_manufactured(data["manufactured"], errors) if "manufactured" in data else None
    if errors:
        raise ConfigError(errors)
    return SimulationConfig(scheme, blocks, source, receivers, output, manufactured, str(base_dir))


def parse_config(path):
    """Read and validate a TOML configuration file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"configuration file {path} does not exist")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return config_from_dict(data, base_dir=path.parent)


def parse_config_text(text, base_dir="."):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([str(exc)]) from None
    return config_from_dict(data, base_dir)


# --------------------------------------------------------------------------
# serialization


def _listify(v):
    if isinstance(v, (tuple, list)):
        return [_listify(x) for x in v]
    if isinstance(v, dict):
        return {k: _listify(x) for k, x in v.items()}
    return v


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


def config_to_dict(cfg):
    """Plain TOML-ready dictionary; :func:`config_from_dict` of it gives an equal config."""
    out = {"scheme": _drop_none(asdict(cfg.scheme))}
    blocks = []
    for b in cfg.blocks:
        d = {"name": b.name, "nodes": list(b.nodes), "extent": _listify(b.extent),
             "mapping": _listify(b.mapping), "medium": _listify(b.medium),
             "faces": {f: fc.to_toml() for f, fc in b.faces.items()}}
        if b.kinds:
            d["kinds"] = list(b.kinds)
        blocks.append(d)
    out["block"] = blocks
    if cfg.source is not None:
        out["source"] = _listify(_drop_none(asdict(cfg.source)))
    if cfg.receivers:
        out["receiver"] = [_listify(_drop_none(asdict(r))) for r in cfg.receivers]
    out["output"] = _listify(asdict(cfg.output))
    if cfg.manufactured is not None:
        out["manufactured"] = asdict(cfg.manufactured)
    return out


def write_config(cfg, path):
    Path(path).write_text(cfg.dumps())


def shipped_config(name):
    """Path of a configuration shipped with the package (e.g. ``"lamb"``)."""
    return Path(__file__).parent / "data" / f"{name}.toml"
