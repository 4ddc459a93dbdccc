"""JSON, OFF and CSV formats for complexes, maps and inverse systems.

File references inside JSON documents (a map's domain, a system's stages)
are resolved relative to the referring file.  A map may also carry its
domain inline as a nested complex object.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .complex import BaryPoint, ComplexError, MetricComplex
from .maps import PLMap


class FormatError(ValueError):
    """Ill-formed input document."""


def _finite(x, what):
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise FormatError(f"{what}: expected a number, got {x!r}") from None
    if not math.isfinite(v):
        raise FormatError(f"{what}: non-finite value {x!r}")
    return v


def _reject_constants(name):
    raise FormatError(f"non-finite literal {name} is not allowed")


def read_json(path) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh, parse_constant=_reject_constants)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def dumps(obj, indent=None) -> str:
    """Deterministic JSON; floats use the shortest repr that round-trips."""
    seps = (",", ": ") if indent is not None else (",", ":")
    return json.dumps(obj, indent=indent, separators=seps, allow_nan=False) + "\n"


def write_json(path, obj, indent=None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj, indent))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# complexes


def complex_to_dict(c: MetricComplex) -> dict:
    out = {
        "dim": c.dim,
        "vertices": c.n_vertices,
        "simplices": [list(s) for s in c.top_simplices],
        "edge_lengths": [[u, v, float(c.edge_lengths[(u, v)])] for (u, v) in sorted(c.edge_lengths)],
    }
    if c.coords is not None:
        out["coords"] = np.asarray(c.coords).tolist()
    return out


def complex_from_dict(d: dict, where: str = "complex") -> MetricComplex:
    if not isinstance(d, dict):
        raise FormatError(f"{where}: expected an object")
    for key in ("vertices", "simplices"):
        if key not in d:
            raise FormatError(f"{where}: missing field {key!r}")
    try:
        n = int(d["vertices"])
        simplices = [tuple(int(v) for v in s) for s in d["simplices"]]
    except (TypeError, ValueError):
        raise FormatError(f"{where}: vertices must be an integer and simplices lists of integers") from None
    lengths = {}
    for row in d.get("edge_lengths") or []:
        if len(row) != 3:
            raise FormatError(f"{where}: edge length rows are [i, j, length]")
        i, j, ell = int(row[0]), int(row[1]), _finite(row[2], f"{where}: edge {row[0]}-{row[1]}")
        if ell <= 0:
            raise FormatError(f"{where}: nonpositive length {ell!r} on edge {i}-{j}")
        lengths[(min(i, j), max(i, j))] = ell
    coords = d.get("coords")
    if coords is not None:
        coords = np.array([[_finite(x, f"{where}: coords") for x in row] for row in coords], dtype=float)
    dim = d.get("dim")
    try:
        return MetricComplex.from_simplices(
            n, simplices, lengths or None, coords=coords, dim=None if dim is None else int(dim)
        )
    except ComplexError as exc:
        raise FormatError(f"{where}: {exc}") from None


def load_complex(path) -> MetricComplex:
    return complex_from_dict(read_json(path), str(path))


def save_complex(c: MetricComplex, path) -> None:
    write_json(path, complex_to_dict(c))


# ---------------------------------------------------------------------------
# maps


def _ref(c: MetricComplex, ref, base: Path):
    if ref is None:
        return complex_to_dict(c)
    return os.path.relpath(Path(ref).resolve(), base.resolve())


def map_to_dict(f: PLMap, domain_ref=None, codomain_ref=None, base=".") -> dict:
    """Serialisable form; ``*_ref`` are file paths (stored relative to ``base``) or None to inline."""
    base = Path(base)
    out = {"domain": _ref(f.domain, domain_ref, base), "level": f.level}
    if f.is_ambient:
        out["ambient_dim"] = f.ambient_dim
        out["vertex_images"] = [[v, row] for v, row in enumerate(np.asarray(f.images).tolist())]
    else:
        out["codomain"] = _ref(f.codomain, codomain_ref, base)
        out["vertex_images"] = [[v, p.simplex, list(p.weights)] for v, p in enumerate(f.cod_points)]
    return out


class _Loader:
    """Resolves complex references so that one file yields one complex object."""

    def __init__(self):
        self.cache: dict = {}

    def complex(self, ref, base: Path, where: str) -> MetricComplex:
        if isinstance(ref, dict):
            return complex_from_dict(ref, where)
        if not isinstance(ref, str):
            raise FormatError(f"{where}: complex reference must be a path or an object")
        p = (base / ref).resolve()
        if p not in self.cache:
            if not p.exists():
                raise FormatError(f"{where}: referenced file {ref!r} not found")
            self.cache[p] = load_complex(p)
        return self.cache[p]

    def map(self, d, base: Path, where: str, domain: MetricComplex | None = None,
            codomain: MetricComplex | None = None) -> PLMap:
        if not isinstance(d, dict):
            raise FormatError(f"{where}: expected an object")
        if domain is None:
            if "domain" not in d:
                raise FormatError(f"{where}: missing field 'domain'")
            domain = self.complex(d["domain"], base, where)
        level = int(d.get("level", 0))
        if level < 0:
            raise FormatError(f"{where}: negative level")
        rows = d.get("vertex_images")
        if rows is None:
            raise FormatError(f"{where}: missing field 'vertex_images'")
        try:
            if codomain is not None or "codomain" in d:
                cod = codomain if codomain is not None else self.complex(d["codomain"], base, where)
                pts = {}
                for row in rows:
                    w = tuple(_finite(x, f"{where}: weights") for x in row[2])
                    pts[int(row[0])] = BaryPoint(int(row[1]), w)
                order = [pts[v] for v in range(len(pts))] if set(pts) == set(range(len(pts))) else None
                if order is None:
                    raise FormatError(f"{where}: vertex images must cover 0..n-1 exactly once")
                return PLMap(domain, level, codomain=cod, cod_points=tuple(order))
            imgs = {}
            for row in rows:
                imgs[int(row[0])] = [_finite(x, f"{where}: image") for x in row[1]]
            if set(imgs) != set(range(len(imgs))):
                raise FormatError(f"{where}: vertex images must cover 0..n-1 exactly once")
            Y = np.array([imgs[v] for v in range(len(imgs))], dtype=float)
            if "ambient_dim" in d and Y.size and Y.shape[1] != int(d["ambient_dim"]):
                raise FormatError(f"{where}: images have dimension {Y.shape[1]}, declared {d['ambient_dim']}")
            if not len(imgs):
                Y = np.zeros((0, int(d.get("ambient_dim", 0))))
            return PLMap(domain, level, Y)
        except (IndexError, TypeError, KeyError) as exc:
            raise FormatError(f"{where}: malformed vertex image row ({exc})") from None
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{where}: {exc}") from None


def load_map(path, domain: MetricComplex | None = None) -> PLMap:
    """Load a map; ``domain`` overrides the referenced domain (it must be the same complex)."""
    path = Path(path)
    return _Loader().map(read_json(path), path.parent, str(path), domain)


def save_map(f: PLMap, path, domain_ref=None, codomain_ref=None) -> None:
    path = Path(path)
    write_json(path, map_to_dict(f, domain_ref, codomain_ref, base=path.parent))


def load_system(path):
    from .prolimit import InverseSystem, InverseSystemError

    path = Path(path)
    d = read_json(path)
    base = path.parent
    if not isinstance(d, dict) or "stages" not in d:
        raise FormatError(f"{path}: expected an object with 'stages'")
    ld = _Loader()
    stages = [ld.complex(ref, base, f"{path}: stage {i}") for i, ref in enumerate(d["stages"])]
    bond_refs = d.get("bondings", [])
    if len(bond_refs) != len(stages) - 1:
        raise FormatError(f"{path}: {len(stages)} stages need {len(stages) - 1} bondings")
    bondings = []
    for i, ref in enumerate(bond_refs):
        where = f"{path}: bonding {i + 1}->{i}"
        if isinstance(ref, str):
            bp = (base / ref)
            if not bp.exists():
                raise FormatError(f"{where}: file {ref!r} not found")
            doc, bbase = read_json(bp), bp.parent
        else:
            doc, bbase = ref, base
        m = ld.map(doc, bbase, where, domain=stages[i + 1], codomain=stages[i])
        bondings.append(m)
    try:
        rank = int(d.get("rank", max(c.dim for c in stages)))
        return InverseSystem(stages, bondings, rank)
    except InverseSystemError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_system(s, path, stage_names=None) -> None:
    """Write a system and its stage/bonding files next to ``path``."""
    path = Path(path)
    base = path.parent
    base.mkdir(parents=True, exist_ok=True)
    names = stage_names or [f"p{i}.json" for i in range(len(s.stages))]
    written = {}
    for i, c in enumerate(s.stages):
        if id(c) in written:
            names[i] = written[id(c)]
            continue
        save_complex(c, base / names[i])
        written[id(c)] = names[i]
    bnames = []
    for i, b in enumerate(s.bondings):
        name = f"b{i + 1}.json"
        save_map(b, base / name, domain_ref=base / names[i + 1], codomain_ref=base / names[i])
        bnames.append(name)
    write_json(path, {"rank": s.rank, "stages": names, "bondings": bnames})


# ---------------------------------------------------------------------------
# points and exports


def point_from_json(obj, c: MetricComplex, where="point") -> BaryPoint:
    """A vertex id or ``[simplex, [weights...]]``."""
    try:
        if isinstance(obj, int) and not isinstance(obj, bool):
            if not 0 <= obj < c.n_vertices:
                raise FormatError(f"{where}: vertex {obj} out of range")
            return c.vertex_point(obj)
        s, w = obj
        p = BaryPoint(int(s), tuple(_finite(x, where) for x in w))
        c.check_point(p)
        return p
    except FormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from None


def point_label(p: BaryPoint) -> str:
    return f"{p.simplex}:" + "|".join(repr(float(w)) for w in p.weights)


def load_pairs(path, c: MetricComplex) -> list[tuple[BaryPoint, BaryPoint]]:
    d = read_json(path)
    rows = d.get("pairs") if isinstance(d, dict) else d
    if not isinstance(rows, list):
        raise FormatError(f"{path}: expected a list of pairs")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 2:
            raise FormatError(f"{path}: pair {i} must have two points")
        out.append((point_from_json(row[0], c, f"{path}: pair {i}"), point_from_json(row[1], c, f"{path}: pair {i}")))
    return out


def to_off(f: PLMap) -> str:
    """OFF text of the image mesh: triangles as faces, edges as 2-vertex faces."""
    if not f.is_ambient:
        raise FormatError("OFF export needs an ambient map")
    if f.ambient_dim > 3:
        raise FormatError(f"OFF holds at most 3 coordinates, map lives in E^{f.ambient_dim}; use json or csv")
    if f.domain.dim > 2:
        raise FormatError("OFF export supports complexes of dimension <= 2")
    Y = np.zeros((len(f.images), 3))
    Y[:, : f.ambient_dim] = f.images
    cells = [c for c in f.cells if len(c) >= 2]
    lines = ["OFF", f"{len(Y)} {len(cells)} 0"]
    lines += [" ".join(repr(float(x)) for x in row) for row in Y]
    lines += [f"{len(c)} " + " ".join(str(v) for v in c) for c in cells]
    return "\n".join(lines) + "\n"


def read_off(text: str) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    toks = [ln.split("#")[0].strip() for ln in text.splitlines()]
    toks = [t for t in toks if t]
    if not toks or toks[0] != "OFF":
        raise FormatError("missing OFF header")
    nv, nf, _ = (int(x) for x in toks[1].split())
    verts = np.array([[float(x) for x in toks[2 + i].split()] for i in range(nv)]).reshape(nv, 3)
    faces = []
    for i in range(nf):
        row = [int(x) for x in toks[2 + nv + i].split()]
        if row[0] != len(row) - 1:
            raise FormatError(f"face {i}: count mismatch")
        faces.append(tuple(row[1:]))
    return verts, faces


def edge_length_rows(f: PLMap) -> list[tuple[int, int, float, float]]:
    cx = f.refinement.complex
    rows = []
    for u, v in cx.edges:
        rows.append((u, v, float(cx.edge_lengths[(u, v)]), float(np.linalg.norm(f.images[u] - f.images[v]))))
    return rows


def to_csv(f: PLMap) -> str:
    if not f.is_ambient:
        raise FormatError("CSV export needs an ambient map")
    lines = ["u,v,target,achieved"]
    lines += [f"{u},{v},{t!r},{a!r}" for u, v, t, a in edge_length_rows(f)]
    return "\n".join(lines) + "\n"


__all__ = [
    "FormatError",
    "read_json",
    "write_json",
    "dumps",
    "file_digest",
    "complex_to_dict",
    "complex_from_dict",
    "load_complex",
    "save_complex",
    "map_to_dict",
    "load_map",
    "save_map",
    "load_system",
    "save_system",
    "point_from_json",
    "point_label",
    "load_pairs",
    "to_off",
    "read_off",
    "edge_length_rows",
    "to_csv",
]
