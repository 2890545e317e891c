"""Mesh files (plain text and a Gmsh MSH 2 ASCII subset) and CSV tables."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .geometry import INFLOW, WALL
from .mesh import LABEL_CODE, MeshError, TriMesh, WallQuadrature, _build

CODE_LABEL = {v: k for k, v in LABEL_CODE.items()}
HEADER = "shapeflow-mesh 1"


def _num(v) -> str:
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# plain-text mesh
# ---------------------------------------------------------------------------


def write_mesh(mesh: TriMesh, path) -> None:
    """Vertices, triangles and boundary edges with label, loop, arclength tags
    and the curved-edge midpoint."""
    mid = mesh.nodes[mesh.nv + mesh.bedge_ids]
    lines = [HEADER, f"level {mesh.level}", f"vertices {mesh.nv}"]
    lines += [f"{_num(x)} {_num(y)}" for x, y in mesh.vertices]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [" ".join(map(str, t)) for t in mesh.triangles]
    lines.append(f"boundary {len(mesh.bedges)}")
    for i, (a, b) in enumerate(mesh.bedges):
        lines.append(f"{a} {b} {CODE_LABEL[int(mesh.blabel[i])]} {mesh.bloop[i]} "
                     f"{_num(mesh.bs0[i])} {_num(mesh.bs1[i])} {_num(mid[i, 0])} {_num(mid[i, 1])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, domain=None) -> TriMesh:
    """Read the plain-text format written by :func:`write_mesh`."""
    tokens = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not tokens or " ".join(tokens[0]) != HEADER:
        raise MeshError(f"{path}: not a shapeflow mesh file")
    pos = 1
    level = 0
    if tokens[pos][0] == "level":
        level = int(tokens[pos][1])
        pos += 1

    def block(name):
        nonlocal pos
        if tokens[pos][0] != name:
            raise MeshError(f"{path}: expected section {name!r}, got {tokens[pos][0]!r}")
        n = int(tokens[pos][1])
        rows = tokens[pos + 1:pos + 1 + n]
        if len(rows) != n:
            raise MeshError(f"{path}: section {name!r} truncated")
        pos += n + 1
        return rows

    V = np.array([[float(x) for x in r] for r in block("vertices")])
    T = np.array([[int(x) for x in r] for r in block("triangles")], dtype=int)
    bnd, mids = [], []
    for r in block("boundary"):
        if r[2] not in (WALL, INFLOW):
            raise MeshError(f"{path}: unknown boundary label {r[2]!r}")
        bnd.append((int(r[0]), int(r[1]), int(r[3]), float(r[4]), float(r[5]), LABEL_CODE[r[2]]))
        mids.append((float(r[6]), float(r[7])))
    mesh = _build(V, T, bnd, level, domain, midpoints=np.array(mids))
    mesh.check()
    return mesh


# ---------------------------------------------------------------------------
# Gmsh MSH 2 ASCII
# ---------------------------------------------------------------------------


def _sections(text: str) -> dict:
    out, name, buf = {}, None, []
    for ln in text.splitlines():
        s = ln.strip()
        if s.startswith("$End"):
            out[name] = buf
            name, buf = None, []
        elif s.startswith("$"):
            name = s[1:]
        elif name is not None:
            buf.append(s)
    return out


def read_gmsh(path, domain=None) -> TriMesh:
    """Import a 2D Gmsh MSH 2.x ASCII file.

    Supported elements: 2-node lines and 3-node triangles, or their quadratic
    versions (types 8 and 9).  Boundary lines must carry a physical group
    named ``wall`` or ``inflow``.  Loops are numbered by decreasing enclosed
    area and arclength tags are accumulated along each loop.
    """
    sec = _sections(Path(path).read_text())
    if "MeshFormat" not in sec or not sec["MeshFormat"][0].startswith("2"):
        raise MeshError(f"{path}: only MSH 2.x ASCII is supported")
    names = {}
    for ln in sec.get("PhysicalNames", [])[1:]:
        dim, tag, name = ln.split(maxsplit=2)
        names[int(tag)] = name.strip('"')
    raw = sec["Nodes"][1:]
    ids = np.array([int(r.split()[0]) for r in raw])
    xy = np.array([[float(v) for v in r.split()[1:3]] for r in raw])
    index = {int(i): k for k, i in enumerate(ids)}
    tris, lines = [], []
    for ln in sec["Elements"][1:]:
        p = [int(v) for v in ln.split()]
        etype, ntags = p[1], p[2]
        tags, nodes = p[3:3 + ntags], [index[v] for v in p[3 + ntags:]]
        if etype in (2, 9):
            tris.append(nodes[:6] if etype == 9 else nodes[:3])
        elif etype in (1, 8):
            label = names.get(tags[0]) if tags else None
            if label not in (WALL, INFLOW):
                raise MeshError(f"{path}: boundary line with physical group {label!r}; use 'wall' or 'inflow'")
            lines.append((nodes, label))
    if not tris:
        raise MeshError(f"{path}: no triangles")
    quadratic = len(tris[0]) == 6
    tri = np.array([t[:3] for t in tris], dtype=int)
    verts_used = np.unique(tri)
    remap = -np.ones(len(xy), dtype=int)
    remap[verts_used] = np.arange(len(verts_used))
    V = xy[verts_used]
    T = remap[tri]
    # orient triangles counterclockwise, then orient boundary edges with the domain on the left
    p = V[T]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    T[area < 0] = T[area < 0][:, [0, 2, 1]]
    directed = {}
    for t in T:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            directed[(a, b)] = True
    edges = []
    for nodes, label in lines:
        a, b = remap[nodes[0]], remap[nodes[1]]
        mid = xy[nodes[2]] if quadratic and len(nodes) > 2 else 0.5 * (V[a] + V[b])
        if (a, b) not in directed:
            a, b = b, a
        if (a, b) not in directed:
            raise MeshError(f"{path}: boundary line {nodes[:2]} is not a triangle edge")
        edges.append([a, b, label, mid])
    # chain edges into loops
    nxt = {e[0]: i for i, e in enumerate(edges)}
    seen = np.zeros(len(edges), dtype=bool)
    loops = []
    for i in range(len(edges)):
        if seen[i]:
            continue
        chain, j = [], i
        while not seen[j]:
            seen[j] = True
            chain.append(j)
            j = nxt.get(edges[j][1])
            if j is None:
                raise MeshError(f"{path}: boundary is not a union of closed loops")
        loops.append(chain)

    def signed_area(chain):
        P = V[[edges[j][0] for j in chain]]
        return 0.5 * np.sum(P[:, 0] * np.roll(P[:, 1], -1) - np.roll(P[:, 0], -1) * P[:, 1])

    loops.sort(key=lambda c: -abs(signed_area(c)))
    bnd, mids = [], []
    for k, chain in enumerate(loops):
        s = 0.0
        for j in chain:
            a, b, label, mid = edges[j]
            ln = np.hypot(*(mid - V[a])) + np.hypot(*(V[b] - mid))
            bnd.append((a, b, k, s, s + ln, LABEL_CODE[label]))
            mids.append(mid)
            s += ln
    mesh = _build(V, T, bnd, 0, domain, midpoints=np.array(mids))
    mesh.check()
    return mesh


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def profile_csv(profile) -> str:
    q = profile.quadrature
    return _csv(["loop", "s", "value"], zip(q.loop.tolist(), q.s.astype(float), profile.values.astype(float)))


def field_csv(field) -> str:
    x = field.space.dof_coords
    return _csv(["node", "x", "y", "value"], zip(range(len(x)), x[:, 0], x[:, 1], field.values.astype(float)))


def quadrature_csv(q: WallQuadrature) -> str:
    return _csv(["loop", "s", "weight", "x", "y", "nx", "ny", "kappa"],
                zip(q.loop.tolist(), q.s, q.weight, q.xy[:, 0], q.xy[:, 1], q.normal[:, 0], q.normal[:, 1], q.kappa))


def table_csv(header, rows) -> str:
    return _csv(header, rows)
