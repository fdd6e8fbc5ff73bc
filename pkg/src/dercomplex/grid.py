"""Voxel domains, cubical entity enumeration and boundary partitions.

A domain is a face-connected set of axis-aligned voxels of edge length ``h``
with its lower corner at the origin.  The cubical complex is the closure of
the occupied voxels: every node, edge and face touching an occupied cell.

Orientation conventions: edges point along ``+axis``; a face with normal
axis ``a`` is oriented by ``+e_a`` and its boundary runs counter-clockwise
around it; cells are positively oriented.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

KINDS = ("node", "edge", "face", "cell")
AXES = "xyz"

# Number of occupied cells around a fully interior entity of each kind.
FULL_COUNT = {"node": 8, "edge": 4, "face": 2, "cell": 1}


class DomainError(ValueError):
    """Invalid voxel occupancy."""


class PartitionError(ValueError):
    """Invalid boundary partition rule."""


@dataclass(frozen=True, eq=False)
class VoxelDomain:
    """Validated voxel occupancy with uniform spacing ``h``.

    ``occupancy`` is indexed ``[x, y, z]``.
    """

    occupancy: np.ndarray
    h: float
    name: str = "custom"

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(int(s) for s in self.occupancy.shape)

    @property
    def n_cells(self) -> int:
        return int(self.occupancy.sum())

    @property
    def volume(self) -> float:
        return self.n_cells * self.h**3

    def fingerprint(self) -> tuple:
        return (self.shape, self.h, self.occupancy.tobytes())


OccupancySpec = Union[np.ndarray, Callable[..., np.ndarray], str, None]


def build_grid(shape: Sequence[int], occupancy: OccupancySpec = None, h: float = 1.0,
               name: str | None = None) -> VoxelDomain:
    """Build a validated voxel domain.

    ``occupancy`` may be a boolean mask of ``shape``, a predicate evaluated
    on cell-centre coordinates ``(x, y, z)``, a preset name, or ``None`` for
    the full box.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or min(shape) < 1:
        raise DomainError(f"shape must be three integers >= 1, got {shape}")
    if not (np.isfinite(h) and h > 0):
        raise DomainError(f"spacing must be positive, got {h}")
    if isinstance(occupancy, str):
        from .presets import preset_mask

        mask = preset_mask(occupancy, shape)
        name = name or occupancy
    elif occupancy is None:
        mask = np.ones(shape, dtype=bool)
        name = name or "box"
    elif callable(occupancy):
        idx = np.indices(shape, dtype=float)
        centers = (idx + 0.5) * h
        mask = np.asarray(occupancy(centers[0], centers[1], centers[2]), dtype=bool)
        mask = np.broadcast_to(mask, shape).copy()
    else:
        mask = np.asarray(occupancy, dtype=bool)
        if mask.shape != shape:
            raise DomainError(f"mask shape {mask.shape} does not match {shape}")
        mask = mask.copy()
    if not mask.any():
        raise DomainError("empty domain")
    _, ncomp = ndimage.label(mask, structure=ndimage.generate_binary_structure(3, 1))
    if ncomp != 1:
        raise DomainError(f"disconnected domain ({ncomp} face-connected components)")
    mask.setflags(write=False)
    return VoxelDomain(occupancy=mask, h=float(h), name=name or "custom")


def read_cell_list(path: str | Path, shape: Sequence[int] | None = None) -> np.ndarray:
    """Read an ``x y z`` cell list (one triple per line, ``#`` comments)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DomainError(f"{path}:{lineno}: expected 'x y z', got {line!r}")
        try:
            rows.append([int(p) for p in parts])
        except ValueError as exc:
            raise DomainError(f"{path}:{lineno}: non-integer cell index") from exc
    if not rows:
        raise DomainError("empty domain")
    cells = np.array(rows, dtype=int)
    if (cells < 0).any():
        raise DomainError(f"{path}: negative cell index")
    if shape is None:
        shape = tuple(cells.max(axis=0) + 1)
    mask = np.zeros(tuple(shape), dtype=bool)
    try:
        mask[cells[:, 0], cells[:, 1], cells[:, 2]] = True
    except IndexError as exc:
        raise DomainError(f"{path}: cell index outside shape {tuple(shape)}") from exc
    return mask


def _neighbour_counts(occ: np.ndarray) -> dict:
    """Occupied-cell counts around every lattice entity (zero = absent)."""
    nx, ny, nz = occ.shape
    P = np.zeros((nx + 2, ny + 2, nz + 2), dtype=np.int8)
    P[1:-1, 1:-1, 1:-1] = occ
    node = np.zeros((nx + 1, ny + 1, nz + 1), dtype=np.int8)
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                node += P[a:a + nx + 1, b:b + ny + 1, c:c + nz + 1]
    edges = []
    faces = []
    dims = (nx, ny, nz)
    for axis in range(3):
        # Edge along `axis`: fixed cell slot along axis, two slots across.
        eshape = [d + 1 for d in dims]
        eshape[axis] = dims[axis]
        e = np.zeros(eshape, dtype=np.int8)
        fshape = list(dims)
        fshape[axis] = dims[axis] + 1
        f = np.zeros(fshape, dtype=np.int8)
        others = [ax for ax in range(3) if ax != axis]
        for s0 in (0, 1):
            for s1 in (0, 1):
                sl = [None, None, None]
                sl[axis] = slice(1, 1 + dims[axis])
                sl[others[0]] = slice(s0, s0 + dims[others[0]] + 1)
                sl[others[1]] = slice(s1, s1 + dims[others[1]] + 1)
                e += P[tuple(sl)]
        for s in (0, 1):
            sl = [slice(1, 1 + d) for d in dims]
            sl[axis] = slice(s, s + dims[axis] + 1)
            f += P[tuple(sl)]
        edges.append(e)
        faces.append(f)
    return {"node": node, "edge": edges, "face": faces, "cell": occ.astype(np.int8)}


def _enumerate(arrays: list[np.ndarray], node_dims: tuple[int, int, int]):
    """Enumerate present lattice entities ordered by (z, y, x, axis)."""
    NX, NY, _ = node_dims
    bases, axes, counts, keys = [], [], [], []
    for axis, arr in enumerate(arrays):
        ijk = np.argwhere(arr > 0)
        bases.append(ijk)
        axes.append(np.full(len(ijk), axis, dtype=np.int8))
        counts.append(arr[tuple(ijk.T)])
        keys.append(((ijk[:, 2] * NY + ijk[:, 1]) * NX + ijk[:, 0]) * 3 + axis)
    base = np.concatenate(bases)
    axis = np.concatenate(axes)
    count = np.concatenate(counts)
    order = np.argsort(np.concatenate(keys), kind="stable")
    return base[order], axis[order], count[order]


@dataclass(frozen=True, eq=False)
class EntityIndex:
    """Dense enumeration of the cubical complex of a :class:`VoxelDomain`.

    Per kind the index stores lattice base coordinates, axis (edge direction
    or face normal) and the number of occupied cells touching the entity.
    Incidence matrices carry orientation signs in ``{+1, -1}`` and are built
    on first access.
    """

    domain: VoxelDomain
    node_base: np.ndarray
    node_count: np.ndarray
    edge_base: np.ndarray
    edge_axis: np.ndarray
    edge_count: np.ndarray
    face_base: np.ndarray
    face_axis: np.ndarray
    face_count: np.ndarray
    cell_base: np.ndarray
    lookup: dict = field(repr=False)

    @property
    def h(self) -> float:
        return self.domain.h

    @property
    def counts(self) -> dict[str, int]:
        return {"node": len(self.node_base), "edge": len(self.edge_base),
                "face": len(self.face_base), "cell": len(self.cell_base)}

    def count(self, kind: str) -> int:
        return self.counts[kind]

    def adjacency_count(self, kind: str) -> np.ndarray:
        if kind == "cell":
            return np.ones(len(self.cell_base), dtype=np.int8)
        return getattr(self, f"{kind}_count")

    @property
    def euler_characteristic(self) -> int:
        c = self.counts
        return c["node"] - c["edge"] + c["face"] - c["cell"]

    def positions(self, kind: str) -> np.ndarray:
        """Sample points: nodes, edge midpoints, face centres, cell centres."""
        h = self.h
        if kind == "node":
            return self.node_base * h
        if kind == "cell":
            return (self.cell_base + 0.5) * h
        base = getattr(self, f"{kind}_base").astype(float)
        axis = getattr(self, f"{kind}_axis")
        offset = np.zeros_like(base)
        rows = np.arange(len(base))
        if kind == "edge":
            offset[rows, axis] = 0.5
        else:
            offset[:] = 0.5
            offset[rows, axis] = 0.0
        return (base + offset) * h

    def find(self, kind: str, base, axis: int = 0) -> np.ndarray:
        """Indices of entities at lattice ``base`` (``-1`` where absent)."""
        base = np.atleast_2d(np.asarray(base, dtype=int))
        table = self.lookup[kind] if kind in ("node", "cell") else self.lookup[kind][axis]
        out = np.full(len(base), -1, dtype=np.int64)
        inside = np.all((base >= 0) & (base < np.array(table.shape)), axis=1)
        out[inside] = table[tuple(base[inside].T)]
        return out

    @cached_property
    def edge_nodes(self) -> np.ndarray:
        """(E, 2) tail/head node indices."""
        step = np.eye(3, dtype=int)[self.edge_axis]
        tail = self.find("node", self.edge_base)
        head = self.find("node", self.edge_base + step)
        return np.stack([tail, head], axis=1)

    @cached_property
    def face_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(F, 4) edge indices and signs of the counter-clockwise boundary loop."""
        a = self.face_axis.astype(int)
        b = (a + 1) % 3
        c = (a + 2) % 3
        eye = np.eye(3, dtype=int)
        p = self.face_base
        idx = np.empty((len(p), 4), dtype=np.int64)
        for k, (off, ax) in enumerate(((None, b), (b, c), (c, b), (None, c))):
            start = p if off is None else p + eye[off]
            for axis in range(3):
                sel = ax == axis
                idx[sel, k] = self.find("edge", start[sel], axis)
        signs = np.array([1, 1, -1, -1], dtype=np.int8)
        return idx, np.broadcast_to(signs, idx.shape)

    @cached_property
    def cell_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """(C, 6) face indices and outward signs: ``-x, +x, -y, +y, -z, +z``."""
        p = self.cell_base
        eye = np.eye(3, dtype=int)
        idx = np.empty((len(p), 6), dtype=np.int64)
        for axis in range(3):
            idx[:, 2 * axis] = self.find("face", p, axis)
            idx[:, 2 * axis + 1] = self.find("face", p + eye[axis], axis)
        signs = np.array([-1, 1, -1, 1, -1, 1], dtype=np.int8)
        return idx, np.broadcast_to(signs, idx.shape)

    @cached_property
    def d0(self) -> sparse.csr_matrix:
        """Signed edge-node incidence (E x N)."""
        E = len(self.edge_base)
        rows = np.repeat(np.arange(E), 2)
        vals = np.tile([-1.0, 1.0], E)
        return sparse.csr_matrix((vals, (rows, self.edge_nodes.ravel())),
                                 shape=(E, len(self.node_base)))

    @cached_property
    def d1(self) -> sparse.csr_matrix:
        """Signed face-edge incidence (F x E)."""
        idx, signs = self.face_edges
        F = len(idx)
        rows = np.repeat(np.arange(F), 4)
        return sparse.csr_matrix((signs.ravel().astype(float), (rows, idx.ravel())),
                                 shape=(F, len(self.edge_base)))

    @cached_property
    def d2(self) -> sparse.csr_matrix:
        """Signed cell-face incidence (C x F)."""
        idx, signs = self.cell_faces
        C = len(idx)
        rows = np.repeat(np.arange(C), 6)
        return sparse.csr_matrix((signs.ravel().astype(float), (rows, idx.ravel())),
                                 shape=(C, len(self.face_base)))

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return self.face_count == 1

    @cached_property
    def boundary_outward(self) -> np.ndarray:
        """+1/-1 outward orientation of boundary faces relative to ``+e_axis``, 0 inside."""
        out = np.zeros(len(self.face_base), dtype=np.int8)
        bf = np.flatnonzero(self.boundary_faces)
        eye = np.eye(3, dtype=int)
        minus_cell = self.find("cell", self.face_base[bf] - eye[self.face_axis[bf]])
        out[bf] = np.where(minus_cell >= 0, 1, -1)
        return out

    def fingerprint(self) -> tuple:
        return self.domain.fingerprint()


def enumerate_entities(domain: VoxelDomain) -> EntityIndex:
    """Enumerate nodes, edges, faces and cells of the occupied closure."""
    counts = _neighbour_counts(domain.occupancy)
    node_dims = counts["node"].shape
    node_base, _, node_count = _enumerate([counts["node"]], node_dims)
    edge_base, edge_axis, edge_count = _enumerate(counts["edge"], node_dims)
    face_base, face_axis, face_count = _enumerate(counts["face"], node_dims)
    cell_base, _, _ = _enumerate([counts["cell"]], node_dims)

    def table(shape, base, ids):
        t = np.full(shape, -1, dtype=np.int64)
        t[tuple(base.T)] = ids
        return t

    def per_axis(arrays, base, axis):
        return [table(arrays[a].shape, base[axis == a], np.flatnonzero(axis == a))
                for a in range(3)]

    lookup = {
        "node": table(node_dims, node_base, np.arange(len(node_base))),
        "cell": table(domain.occupancy.shape, cell_base, np.arange(len(cell_base))),
        "edge": per_axis(counts["edge"], edge_base, edge_axis),
        "face": per_axis(counts["face"], face_base, face_axis),
    }
    for arr in (node_base, node_count, edge_base, edge_axis, edge_count,
                face_base, face_axis, face_count, cell_base):
        arr.setflags(write=False)
    return EntityIndex(domain=domain, node_base=node_base, node_count=node_count,
                       edge_base=edge_base, edge_axis=edge_axis, edge_count=edge_count,
                       face_base=face_base, face_axis=face_axis, face_count=face_count,
                       cell_base=cell_base, lookup=lookup)


# --- boundary partitions -------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Split of the boundary faces into the parts ``T`` and ``N``.

    ``face_t`` is true on ``T``-tagged boundary faces; ``face_n`` on the
    ``N``-tagged ones (interior faces carry neither).  Edges and nodes are
    ``T`` iff they touch a ``T`` face, so interface entities belong to ``T``.
    """

    index: EntityIndex
    face_t: np.ndarray
    rule: str = "custom"

    @cached_property
    def face_n(self) -> np.ndarray:
        return self.index.boundary_faces & ~self.face_t

    @cached_property
    def edge_t(self) -> np.ndarray:
        idx, _ = self.index.face_edges
        out = np.zeros(self.index.count("edge"), dtype=bool)
        out[idx[self.face_t].ravel()] = True
        return out

    @cached_property
    def node_t(self) -> np.ndarray:
        out = np.zeros(self.index.count("node"), dtype=bool)
        out[self.index.edge_nodes[self.edge_t].ravel()] = True
        return out

    @cached_property
    def edge_n(self) -> np.ndarray:
        """Edges touching an ``N`` face."""
        idx, _ = self.index.face_edges
        out = np.zeros(self.index.count("edge"), dtype=bool)
        out[idx[self.face_n].ravel()] = True
        return out

    @cached_property
    def interface_edges(self) -> np.ndarray:
        return self.edge_t & self.edge_n

    def mask(self, kind: str) -> np.ndarray:
        """Boolean ``T`` mask for ``kind`` (cells are never tagged)."""
        if kind == "cell":
            return np.zeros(self.index.count("cell"), dtype=bool)
        return getattr(self, f"{kind}_t")

    @property
    def is_empty_t(self) -> bool:
        return not self.face_t.any()

    @property
    def is_full_t(self) -> bool:
        return not self.face_n.any()

    def swapped(self) -> "BoundaryPartition":
        """The partition with ``T`` and ``N`` exchanged."""
        return BoundaryPartition(self.index, self.face_n.copy(), rule=f"swap({self.rule})")

    def summary(self) -> dict:
        h2 = self.index.h ** 2
        return {
            "rule": self.rule,
            "t_faces": int(self.face_t.sum()),
            "n_faces": int(self.face_n.sum()),
            "t_area": float(self.face_t.sum() * h2),
            "n_area": float(self.face_n.sum() * h2),
            "interface_edges": int(self.interface_edges.sum()),
        }


PartitionSpec = Union[str, Mapping, None]

_SIDE_NAMES = {f"{ax}{s}": (i, s) for i, ax in enumerate(AXES) for s in "-+"}


def _side_faces(index: EntityIndex, side: str) -> np.ndarray:
    try:
        axis, s = _SIDE_NAMES[side]
    except KeyError:
        raise PartitionError(f"unknown side selector {side!r}; use one of {sorted(_SIDE_NAMES)}")
    plane = 0 if s == "-" else index.domain.shape[axis]
    return index.boundary_faces & (index.face_axis == axis) & (index.face_base[:, axis] == plane)


def tag_boundary(index: EntityIndex, spec: PartitionSpec = "all-N") -> BoundaryPartition:
    """Tag every boundary face ``T`` or ``N``.

    Accepted rules:

    * ``"all-T"`` / ``"all-N"``;
    * ``"T:x-,y+"`` (listed bounding-box sides ``T``, the rest ``N``) and
      the mirror form ``"N:..."``;
    * a mapping ``{face_index: "T" | "N"}`` that must cover every boundary
      face exactly;
    * a mapping ``{"T": [...], "N": [...]}`` of side names and/or face
      indices, again covering the whole boundary.
    """
    bf = index.boundary_faces
    if spec is None:
        spec = "all-N"
    if isinstance(spec, str):
        rule = spec.strip()
        if rule == "all-T":
            face_t = bf.copy()
        elif rule == "all-N":
            face_t = np.zeros_like(bf)
        elif rule[:2] in ("T:", "N:"):
            sel = np.zeros_like(bf)
            for side in filter(None, (s.strip() for s in rule[2:].split(","))):
                sel |= _side_faces(index, side)
            face_t = sel if rule[0] == "T" else bf & ~sel
        else:
            raise PartitionError(f"unknown partition rule {rule!r}")
        return BoundaryPartition(index, face_t, rule=rule)

    spec = dict(spec)
    tagged = {}
    if set(spec) <= {"T", "N"}:
        for tag, items in spec.items():
            for item in items:
                faces = (np.flatnonzero(_side_faces(index, item)) if isinstance(item, str)
                         else [int(item)])
                for f in faces:
                    tagged[int(f)] = tag
    else:
        for f, tag in spec.items():
            if tag not in ("T", "N"):
                raise PartitionError(f"face {f}: tag must be 'T' or 'N', got {tag!r}")
            tagged[int(f)] = tag
    faces = np.fromiter(tagged, dtype=np.int64, count=len(tagged))
    if len(faces) and ((faces < 0) | (faces >= len(bf))).any():
        raise PartitionError("face index out of range")
    if len(faces) and not bf[faces].all():
        raise PartitionError("interior face tagged")
    if len(faces) != bf.sum():
        raise PartitionError(f"partial partition: {int(bf.sum()) - len(faces)} boundary faces untagged")
    face_t = np.zeros_like(bf)
    face_t[[f for f, t in tagged.items() if t == "T"]] = True
    return BoundaryPartition(index, face_t, rule="explicit")


# --- admissibility proxy ---------------------------------------------------

@dataclass
class AdmissibilityReport:
    checks: dict[str, tuple[str, str]]
    interface_loops: int
    boundary_components: int

    @property
    def ok(self) -> bool:
        return all(status == "pass" for status, _ in self.checks.values())

    @property
    def warnings(self) -> list[str]:
        return [msg for status, msg in self.checks.values() if status == "warn"]


def _face_components(index: EntityIndex, faces: np.ndarray) -> np.ndarray:
    """Edge-connected component labels of a set of boundary faces (-1 outside)."""
    sel = np.flatnonzero(faces)
    labels = np.full(len(faces), -1, dtype=np.int64)
    if len(sel) == 0:
        return labels
    idx, _ = index.face_edges
    rows = np.repeat(np.arange(len(sel)), 4)
    inc = sparse.csr_matrix((np.ones(rows.size), (rows, idx[sel].ravel())),
                            shape=(len(sel), index.count("edge")))
    adj = inc @ inc.T
    _, lab = csgraph.connected_components(adj, directed=False)
    labels[sel] = lab
    return labels


def validate_admissible(partition: BoundaryPartition) -> AdmissibilityReport:
    """Discrete proxy checks for an admissible pair; warnings never abort.

    (a) tags are whole faces and cover exactly the boundary;
    (b) within each boundary component, the ``T`` and ``N`` parts are each
        edge-connected;
    (c) the interface edges form closed polygonal curves (every interface
        node has interface degree 2).
    """
    index = partition.index
    bf = index.boundary_faces
    checks: dict[str, tuple[str, str]] = {}
    covered = (partition.face_t | partition.face_n) == bf
    disjoint = not (partition.face_t & partition.face_n).any()
    inside = not (partition.face_t & ~bf).any()
    checks["whole_faces"] = (("pass", "tags are unions of whole boundary faces")
                             if covered.all() and disjoint and inside
                             else ("warn", "tags do not cover the boundary exactly"))

    comp = _face_components(index, bf)
    ncomp = int(comp.max() + 1) if bf.any() else 0
    for tag, faces in (("T", partition.face_t), ("N", partition.face_n)):
        lab = _face_components(index, faces)
        bad = []
        for c in range(ncomp):
            parts = np.unique(lab[faces & (comp == c)])
            if len(parts) > 1:
                bad.append(c)
        name = "Γt" if tag == "T" else "Γn"
        checks[f"{tag}_connected"] = (("pass", f"{name} edge-connected per boundary component")
                                      if not bad else
                                      ("warn", f"{name} not edge-connected"))

    iface = np.flatnonzero(partition.interface_edges)
    loops = 0
    if len(iface):
        ends = index.edge_nodes[iface].ravel()
        degree = np.bincount(ends, minlength=index.count("node"))
        used = degree > 0
        closed = bool(np.all(degree[used] == 2))
        rows = np.repeat(np.arange(len(iface)), 2)
        inc = sparse.csr_matrix((np.ones(rows.size), (rows, ends)),
                                shape=(len(iface), index.count("node")))
        loops = csgraph.connected_components(inc @ inc.T, directed=False)[0]
        checks["interface_curves"] = (("pass", f"interface is {loops} closed curve(s)") if closed
                                      else ("warn", "interface is not a union of simple closed curves"))
    else:
        checks["interface_curves"] = ("pass", "interface is empty")
    return AdmissibilityReport(checks=checks, interface_loops=int(loops), boundary_components=ncomp)
