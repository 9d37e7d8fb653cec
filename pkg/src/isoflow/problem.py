"""JSON problem files.

A problem file is one JSON object with a ``version`` field.  Complex numbers
are written ``[re, im]``, exact rationals as ``"p/q"`` strings, the point at
infinity as ``"inf"``.  Recognized keys::

    version   1
    graph     {"core": [3, 1], "legs": [0, 0, 0, 1]}   (legs: list or {node: length})
    d         dimension vector, list in canonical node order or {node: int}
    lambda    parameter vector, same layout as d
    phase     {"fourier": [...], "times": [...], "blocks": {"0,1": [[...]], ...},
               "dims": [[...], ...]}                 (dims optional when graph and d are given)
    path      list of time vectors
    orbits    free-form list (kept verbatim)
    options   {"step", "seed", "trials", "depth", "node"}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from .kacmoody import GraphError, SupernovaGraph, build_supernova, pairing
from .phase import INF, FlowState, FourierConfig, GradedSpace, PhaseError, TimeConfig, gamma_from_blocks

VERSION = 1


class ProblemError(ValueError):
    """Malformed problem file; ``where`` is a JSON path to the offending entry."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def encode_number(x):
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, (float, np.floating)):
        return float(x)
    z = complex(x)
    return [z.real, z.imag]


def decode_number(v, where: str = "$"):
    if isinstance(v, bool):
        raise ProblemError(where, "expected a number")
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return v
    if isinstance(v, str):
        if v == "inf":
            return INF
        try:
            return Fraction(v)
        except (ValueError, ZeroDivisionError):
            raise ProblemError(where, f"cannot read number {v!r}") from None
    if isinstance(v, list) and len(v) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v):
        return complex(v[0], v[1])
    raise ProblemError(where, "expected a number, [re, im], \"p/q\" or \"inf\"")


def _matrix(v, where: str) -> np.ndarray:
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise ProblemError(where, "expected a row-major matrix")
    if v and len({len(r) for r in v}) > 1:
        raise ProblemError(where, "ragged matrix")
    rows = [[complex(decode_number(x, f"{where}[{i}][{j}]")) for j, x in enumerate(r)] for i, r in enumerate(v)]
    return np.array(rows, dtype=complex).reshape(len(v), len(v[0]) if v else 0)


def _encode_matrix(m: np.ndarray):
    return [[encode_number(complex(x)) for x in row] for row in np.asarray(m)]


@dataclass
class Problem:
    version: int = VERSION
    core: list | None = None
    legs: Any = None
    graph: SupernovaGraph | None = None
    d: tuple[int, ...] | None = None
    lam: tuple | None = None
    fourier: FourierConfig | None = None
    times: list | None = None
    blocks: dict = field(default_factory=dict)
    dims: list | None = None
    path: list | None = None
    orbits: list | None = None
    options: dict = field(default_factory=dict)

    # --- derived -----------------------------------------------------------------

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) in (None, {}) and not (name == "blocks" and self.fourier is not None):
                raise ProblemError(f"$.{_KEYS.get(name, name)}", "required by this command but missing")

    def space(self) -> GradedSpace:
        if self.dims is not None:
            return GradedSpace(self.dims)
        if self.graph is None or self.d is None:
            raise ProblemError("$.phase.dims", "dims missing and not derivable from graph and d")
        return GradedSpace([[self.d[self.graph.index(v)] for v in part] for part in self.graph.parts])

    def state(self) -> FlowState:
        if self.fourier is None or self.times is None:
            raise ProblemError("$.phase", "phase data (fourier points and times) required")
        sp = self.space()
        try:
            gamma = gamma_from_blocks(sp, self.blocks)
            return FlowState(sp, self.fourier, gamma, np.array(self.times, dtype=complex))
        except PhaseError as exc:
            raise ProblemError("$.phase", str(exc)) from None

    # --- serialization -------------------------------------------------------------

    def to_json(self) -> dict:
        out: dict = {"version": self.version}
        if self.core is not None:
            legs = self.legs if isinstance(self.legs, dict) else list(self.legs) if self.legs is not None else None
            out["graph"] = {"core": list(self.core)} | ({"legs": legs} if legs is not None else {})
        if self.d is not None:
            out["d"] = [int(x) for x in self.d]
        if self.lam is not None:
            out["lambda"] = [encode_number(x) for x in self.lam]
        if self.fourier is not None:
            phase = {
                "fourier": [encode_number(a) for a in self.fourier.points],
                "times": [encode_number(complex(t)) for t in self.times],
                "blocks": {f"{i},{j}": _encode_matrix(m) for (i, j), m in sorted(self.blocks.items())},
            }
            if self.dims is not None:
                phase["dims"] = [list(p) for p in self.dims]
            out["phase"] = phase
        if self.path is not None:
            out["path"] = [[encode_number(complex(t)) for t in p] for p in self.path]
        if self.orbits is not None:
            out["orbits"] = self.orbits
        if self.options:
            out["options"] = dict(self.options)
        return out


_KEYS = {"lam": "lambda", "fourier": "phase.fourier", "times": "phase.times", "blocks": "phase.blocks", "core": "graph"}


def _vector(v, graph, where: str, decode):
    if isinstance(v, dict):
        if graph is None:
            raise ProblemError(where, "keyed vectors need a graph")
        unknown = [k for k in v if k not in graph.nodes]
        if unknown:
            raise ProblemError(f"{where}.{unknown[0]}", "unknown node")
        return tuple(decode(v.get(n, 0), f"{where}.{n}") for n in graph.nodes)
    if not isinstance(v, list):
        raise ProblemError(where, "expected a list or a node-keyed object")
    if graph is not None and len(v) != graph.size:
        raise ProblemError(where, f"expected {graph.size} entries (one per node), got {len(v)}")
    return tuple(decode(x, f"{where}[{i}]") for i, x in enumerate(v))


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProblemError(where, "expected an integer")
    return v


def parse(data: dict) -> Problem:
    if not isinstance(data, dict):
        raise ProblemError("$", "expected a JSON object")
    version = data.get("version")
    if version != VERSION:
        raise ProblemError("$.version", f"unsupported version {version!r} (expected {VERSION})")
    known = {"version", "graph", "d", "lambda", "phase", "path", "orbits", "options"}
    for key in data:
        if key not in known:
            raise ProblemError(f"$.{key}", "unknown key")
    pb = Problem()
    if "graph" in data:
        g = data["graph"]
        if not isinstance(g, dict) or "core" not in g:
            raise ProblemError("$.graph", "expected {\"core\": [...], \"legs\": ...}")
        core = g["core"]
        legs = g.get("legs")
        try:
            if legs is None:
                legs = [0] * sum(p if isinstance(p, int) else len(p) for p in core)
            pb.graph = build_supernova(core, legs)
        except (GraphError, TypeError) as exc:
            raise ProblemError("$.graph", str(exc)) from None
        pb.core, pb.legs = core, g.get("legs")
    if "d" in data:
        pb.d = tuple(int(x) for x in _vector(data["d"], pb.graph, "$.d", _int))
    if "lambda" in data:
        pb.lam = _vector(data["lambda"], pb.graph, "$.lambda", decode_number)
    if pb.d is not None and pb.lam is not None:
        if len(pb.d) != len(pb.lam):
            raise ProblemError("$.lambda", "lambda and d have different lengths")
        s = pairing(pb.lam, pb.d)
        exact = isinstance(s, (int, Fraction))
        if (s != 0) if exact else abs(complex(s)) > 1e-10 * max(1.0, max(abs(complex(x)) for x in pb.lam)):
            raise ProblemError("$.lambda", f"lambda . d = {s} is not zero")
    if "phase" in data:
        ph = data["phase"]
        if not isinstance(ph, dict):
            raise ProblemError("$.phase", "expected an object")
        try:
            pb.fourier = FourierConfig([decode_number(a, f"$.phase.fourier[{k}]") for k, a in enumerate(ph.get("fourier", []))])
        except PhaseError as exc:
            raise ProblemError("$.phase.fourier", str(exc)) from None
        if "dims" in ph:
            pb.dims = [[_int(x, f"$.phase.dims[{j}][{k}]") for k, x in enumerate(p)] for j, p in enumerate(ph["dims"])]
        pb.times = [complex(decode_number(t, f"$.phase.times[{k}]")) for k, t in enumerate(ph.get("times", []))]
        for key, m in ph.get("blocks", {}).items():
            try:
                i, j = (int(x) for x in key.split(","))
            except ValueError:
                raise ProblemError(f"$.phase.blocks.{key}", "block keys look like \"i,j\"") from None
            pb.blocks[(i, j)] = _matrix(m, f"$.phase.blocks.{key}")
        sp = pb.space()
        if len(pb.fourier.points) != sp.nparts:
            raise ProblemError("$.phase.fourier", f"expected {sp.nparts} points, one per part")
        if len(pb.times) != sp.nnodes:
            raise ProblemError("$.phase.times", f"expected {sp.nnodes} times, one per core node")
        try:
            TimeConfig(pb.times).check(sp)
        except PhaseError as exc:
            raise ProblemError("$.phase.times", str(exc)) from None
        ps = sp.part_slices
        for (i, j), m in pb.blocks.items():
            where = f"$.phase.blocks.{i},{j}"
            if not (0 <= i < sp.nparts and 0 <= j < sp.nparts) or i == j:
                raise ProblemError(where, "blocks are indexed by two distinct parts")
            shape = (ps[i].stop - ps[i].start, ps[j].stop - ps[j].start)
            if m.shape != shape and m.size:
                raise ProblemError(where, f"expected shape {shape}, got {m.shape}")
        pb.state()
    if "path" in data:
        if not isinstance(data["path"], list):
            raise ProblemError("$.path", "expected a list of time vectors")
        pb.path = [[complex(decode_number(t, f"$.path[{k}][{m}]")) for m, t in enumerate(p)] for k, p in enumerate(data["path"])]
        if pb.times is not None:
            for k, p in enumerate(pb.path):
                if len(p) != len(pb.times):
                    raise ProblemError(f"$.path[{k}]", "length differs from the number of times")
    if "orbits" in data:
        pb.orbits = data["orbits"]
    if "options" in data:
        opts = data["options"]
        if not isinstance(opts, dict):
            raise ProblemError("$.options", "expected an object")
        pb.options = dict(opts)
    return pb


def load(path) -> Problem:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    except OSError as exc:
        raise ProblemError(str(path), exc.strerror or str(exc)) from None
    return parse(data)


def dumps(pb: Problem) -> str:
    return json.dumps(pb.to_json(), indent=2)


def from_state(state: FlowState, **extra) -> Problem:
    """Problem holding the phase data of a state (blocks for every ordered pair of parts)."""
    sp = state.space
    blocks = {(i, j): state.block(i, j) for i in range(sp.nparts) for j in range(sp.nparts) if i != j}
    return Problem(fourier=state.fourier, times=list(state.times), blocks=blocks, dims=[list(p) for p in sp.dims], **extra)
