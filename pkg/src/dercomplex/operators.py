"""Discrete mixed-boundary de Rham complex on voxel domains.

Two ladders of operators are assembled for a partition ``(T, N)``:

* the primal ladder with essential conditions on ``T``::

      grad_T : node -> edge,   curl_T : edge -> face,   div_T : face -> cell

  realised by incidence matrices scaled by ``1/h`` with ``T`` columns
  removed;

* the dual ladder with conditions on ``N``::

      div_N : edge -> node,    curl_N : face -> edge,   grad_N : cell -> face

  assembled from dual-grid geometry (dual cells, dual faces, dual edges
  clipped to the domain).  Homogeneous data on ``N`` means clipped dual
  pieces lying on ``N`` contribute nothing; rows of ``T`` entities are
  dropped because the trace there is unconstrained.

With lumped masses equal to primal measure times dual measure, the dual
ladder is exactly the mass-weighted adjoint of the primal one:
``grad_T* = -div_N``, ``curl_T* = curl_N``, ``div_T* = -grad_N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import sparse

from .grid import FULL_COUNT, KINDS, BoundaryPartition, EntityIndex, tag_boundary


class FieldError(ValueError):
    """Incompatible or invalid field data."""


class InconsistentInputs(ValueError):
    """Operator inputs built from different grids."""


@dataclass(frozen=True)
class Field:
    """Coefficient vector attached to one entity kind."""

    kind: str
    coeffs: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FieldError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    def __len__(self):
        return len(self.coeffs)

    def _other(self, other):
        if isinstance(other, Field):
            if other.kind != self.kind or len(other) != len(self):
                raise FieldError("incompatible fields")
            return other.coeffs
        return other

    def __add__(self, other):
        return Field(self.kind, self.coeffs + self._other(other))

    def __sub__(self, other):
        return Field(self.kind, self.coeffs - self._other(other))

    def __mul__(self, scalar):
        return Field(self.kind, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.kind, -self.coeffs)

    @classmethod
    def zeros(cls, index: EntityIndex, kind: str) -> "Field":
        return cls(kind, np.zeros(index.count(kind)))


@dataclass(frozen=True, eq=False)
class MassWeights:
    """Diagonal L2 weights per kind: primal measure times clipped dual measure.

    A fully interior entity weighs ``h**3``; entities on the boundary carry
    the fraction of their dual cell inside the domain (occupied neighbour
    count over the interior count).
    """

    index: EntityIndex
    node: np.ndarray
    edge: np.ndarray
    face: np.ndarray
    cell: np.ndarray

    def of(self, kind: str) -> np.ndarray:
        return getattr(self, kind)

    def diag(self, kind: str) -> sparse.dia_matrix:
        return sparse.diags(self.of(kind))

    @property
    def volume(self) -> float:
        return float(self.cell.sum())


def mass_weights(index: EntityIndex) -> MassWeights:
    h3 = index.h ** 3
    w = {k: h3 * index.adjacency_count(k).astype(float) / FULL_COUNT[k] for k in KINDS}
    for v in w.values():
        v.setflags(write=False)
    return MassWeights(index=index, **w)


def inner_product(u: Field, v: Field, masses: MassWeights) -> float:
    """Mass-weighted inner product ``sum_i w_i u_i v_i``."""
    if u.kind != v.kind or len(u) != len(v):
        raise FieldError("incompatible fields")
    w = masses.of(u.kind)
    if len(w) != len(u):
        raise FieldError("incompatible fields")
    return float(np.dot(w * u.coeffs, v.coeffs))


def norm(u: Field, masses: MassWeights) -> float:
    return float(np.sqrt(max(inner_product(u, u, masses), 0.0)))


# labels of the six continuum operators and their adjoints (sign, label)
_ADJOINT = {
    "grad_T": (-1, "div_N"), "div_N": (-1, "grad_T"),
    "curl_T": (1, "curl_N"), "curl_N": (1, "curl_T"),
    "div_T": (-1, "grad_N"), "grad_N": (-1, "div_T"),
}


def _adjoint_label(label: str) -> str:
    sign = -1 if label.startswith("-") else 1
    base = label.lstrip("-")
    s, other = _ADJOINT[base]
    return other if sign * s > 0 else f"-{other}"


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse map between entity spaces with boundary masks.

    ``bc_mask`` flags domain entities constrained to zero (their columns
    are zero); ``range_mask`` flags codomain entities the operator never
    reaches (their rows are zero).
    """

    matrix: sparse.csr_matrix
    domain_kind: str
    codomain_kind: str
    bc_mask: np.ndarray
    range_mask: np.ndarray
    label: str
    partition: BoundaryPartition | None = None

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, u: Field) -> Field:
        if u.kind != self.domain_kind:
            raise FieldError(f"{self.label} expects a {self.domain_kind} field, got {u.kind}")
        return Field(self.codomain_kind, self.matrix @ u.coeffs)

    def __call__(self, u: Field) -> Field:
        return self.apply(u)

    def __matmul__(self, other):
        if isinstance(other, Field):
            return self.apply(other)
        return self.matrix @ other

    def to_coo_text(self, path: str | Path | None = None) -> str:
        """Coordinate-format dump, one ``row col value`` per line."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"# {self.label}: {self.codomain_kind} x {self.domain_kind} {self.shape}"]
        lines += [f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _check_inputs(index: EntityIndex, partition: BoundaryPartition, masses: MassWeights):
    if partition.index is not index and partition.index.fingerprint() != index.fingerprint():
        raise InconsistentInputs("inconsistent inputs: partition built on another grid")
    if masses.index is not index and masses.index.fingerprint() != index.fingerprint():
        raise InconsistentInputs("inconsistent inputs: masses built on another grid")


def _mask_columns(A: sparse.spmatrix, mask: np.ndarray) -> sparse.csr_matrix:
    keep = sparse.diags((~mask).astype(float))
    out = (A @ keep).tocsr()
    out.eliminate_zeros()
    return out


def _mask_rows(A: sparse.spmatrix, mask: np.ndarray) -> sparse.csr_matrix:
    keep = sparse.diags((~mask).astype(float))
    out = (keep @ A).tocsr()
    out.eliminate_zeros()
    return out


def _make(matrix, dom, cod, bc_mask, range_mask, label, partition):
    for arr in (bc_mask, range_mask):
        arr.setflags(write=False)
    return DiscreteOperator(matrix=matrix, domain_kind=dom, codomain_kind=cod,
                            bc_mask=bc_mask, range_mask=range_mask, label=label,
                            partition=partition)


def _dual_lengths(index: EntityIndex) -> dict:
    """Clipped dual measures: dual-cell volume (node), dual-face area (edge),
    dual-edge length (face)."""
    h = index.h
    return {
        "node": h ** 3 * index.node_count / 8.0,
        "edge": h ** 2 * index.edge_count / 4.0,
        "face": h * index.face_count / 2.0,
    }


def gradient_op(index: EntityIndex, partition: BoundaryPartition, masses: MassWeights,
                tag: str = "T") -> DiscreteOperator:
    """``grad_T`` (node -> edge) or, with ``tag="N"``, the dual ``grad_N`` (cell -> face)."""
    _check_inputs(index, partition, masses)
    if tag == "T":
        G = _mask_columns(index.d0 / index.h, partition.node_t)
        return _make(G, "node", "edge", partition.node_t.copy(), partition.edge_t.copy(),
                     "grad_T", partition)
    if tag != "N":
        raise ValueError(f"tag must be 'T' or 'N', got {tag!r}")
    # Dual edge of face f joins the cell centres on either side; a missing
    # neighbour is replaced by the boundary value 0 at the face centre.
    length = _dual_lengths(index)["face"]
    eye = np.eye(3, dtype=int)
    F = index.count("face")
    free = np.flatnonzero(~partition.face_t)
    minus = index.find("cell", index.face_base[free] - eye[index.face_axis[free]])
    plus = index.find("cell", index.face_base[free])
    rows, cols, vals = [], [], []
    for cells, sign in ((plus, 1.0), (minus, -1.0)):
        ok = cells >= 0
        rows.append(free[ok])
        cols.append(cells[ok])
        vals.append(sign / length[free[ok]])
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(F, index.count("cell")))
    return _make(A, "cell", "face", np.zeros(index.count("cell"), dtype=bool),
                 partition.face_t.copy(), "grad_N", partition)


def curl_op(index: EntityIndex, partition: BoundaryPartition, masses: MassWeights,
            tag: str = "T") -> DiscreteOperator:
    """``curl_T`` (edge -> face) or, with ``tag="N"``, the dual ``curl_N`` (face -> edge)."""
    _check_inputs(index, partition, masses)
    if tag == "T":
        C = _mask_columns(index.d1 / index.h, partition.edge_t)
        return _make(C, "edge", "face", partition.edge_t.copy(), partition.face_t.copy(),
                     "curl_T", partition)
    if tag != "N":
        raise ValueError(f"tag must be 'T' or 'N', got {tag!r}")
    # Circulation of the face field along the boundary of each clipped dual
    # face, divided by its area.  The dual face of edge e lies in the plane
    # normal to e; the dual edge of a face f crosses it at r = c_f - m_e and
    # runs along n_f, entering the loop with sign (t_e x r) . n_f.
    dual = _dual_lengths(index)
    fidx, _ = index.face_edges
    F = index.count("face")
    face_ids = np.repeat(np.arange(F), 4)
    edge_ids = fidx.ravel()
    keep = ~partition.edge_t[edge_ids]
    face_ids, edge_ids = face_ids[keep], edge_ids[keep]
    eye = np.eye(3)
    r = index.positions("face")[face_ids] - index.positions("edge")[edge_ids]
    t = eye[index.edge_axis[edge_ids]]
    n = eye[index.face_axis[face_ids]]
    sign = np.sign(np.einsum("ij,ij->i", np.cross(t, r), n))
    vals = sign * dual["face"][face_ids] / dual["edge"][edge_ids]
    A = sparse.csr_matrix((vals, (edge_ids, face_ids)), shape=(index.count("edge"), F))
    return _make(A, "face", "edge", partition.face_t.copy(), partition.edge_t.copy(),
                 "curl_N", partition)


def divergence_op(index: EntityIndex, partition: BoundaryPartition, masses: MassWeights,
                  tag: str = "T") -> DiscreteOperator:
    """``div_T`` (face -> cell) or, with ``tag="N"``, the dual ``div_N`` (edge -> node).

    ``div_N`` is the net flux out of each clipped dual cell through the dual
    faces pierced by its edges, over the dual-cell volume; boundary pieces
    on ``N`` carry zero normal flux.
    """
    _check_inputs(index, partition, masses)
    if tag == "T":
        D = _mask_columns(index.d2 / index.h, partition.face_t)
        return _make(D, "face", "cell", partition.face_t.copy(),
                     np.zeros(index.count("cell"), dtype=bool), "div_T", partition)
    if tag != "N":
        raise ValueError(f"tag must be 'T' or 'N', got {tag!r}")
    dual = _dual_lengths(index)
    ends = index.edge_nodes
    E = index.count("edge")
    rows, cols, vals = [], [], []
    for side, outward in ((0, 1.0), (1, -1.0)):  # tail: edge leaves the dual cell
        nodes = ends[:, side]
        ok = ~partition.node_t[nodes]
        rows.append(nodes[ok])
        cols.append(np.flatnonzero(ok))
        vals.append(outward * dual["edge"][ok] / dual["node"][nodes[ok]])
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(index.count("node"), E))
    return _make(A, "edge", "node", partition.edge_t.copy(), partition.node_t.copy(),
                 "div_N", partition)


def adjoint_op(op: DiscreteOperator, masses: MassWeights) -> DiscreteOperator:
    """Mass-weighted adjoint ``M_dom^-1 A^T M_cod`` with the label of the adjoint."""
    Md_inv = sparse.diags(1.0 / masses.of(op.domain_kind))
    Mc = masses.diag(op.codomain_kind)
    A = (Md_inv @ op.matrix.T @ Mc).tocsr()
    A.eliminate_zeros()
    return DiscreteOperator(matrix=A, domain_kind=op.codomain_kind, codomain_kind=op.domain_kind,
                            bc_mask=op.range_mask, range_mask=op.bc_mask,
                            label=_adjoint_label(op.label), partition=op.partition)


def negate(op: DiscreteOperator) -> DiscreteOperator:
    label = op.label[1:] if op.label.startswith("-") else f"-{op.label}"
    return DiscreteOperator(matrix=-op.matrix, domain_kind=op.domain_kind,
                            codomain_kind=op.codomain_kind, bc_mask=op.bc_mask,
                            range_mask=op.range_mask, label=label, partition=op.partition)


@dataclass(frozen=True, eq=False)
class Complex:
    """All six operators of one partition together with the masses."""

    index: EntityIndex
    partition: BoundaryPartition
    masses: MassWeights
    grad: DiscreteOperator
    curl: DiscreteOperator
    div: DiscreteOperator
    div_n: DiscreteOperator
    curl_n: DiscreteOperator
    grad_n: DiscreteOperator

    @property
    def h(self) -> float:
        return self.index.h

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.partition.node_t)

    @cached_property
    def free_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.partition.edge_t)

    @cached_property
    def free_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.partition.face_t)

    def admissible(self, u: Field) -> Field:
        """Zero the ``T``-tagged coefficients of ``u``."""
        return Field(u.kind, np.where(self.partition.mask(u.kind), 0.0, u.coeffs))

    def inner(self, u: Field, v: Field) -> float:
        return inner_product(u, v, self.masses)

    def norm(self, u: Field) -> float:
        return norm(u, self.masses)


def assemble(index: EntityIndex, partition: BoundaryPartition | str | None = None) -> Complex:
    """Assemble both ladders for ``partition`` (a partition or a rule)."""
    if not isinstance(partition, BoundaryPartition):
        partition = tag_boundary(index, partition)
    masses = mass_weights(index)
    return Complex(index=index, partition=partition, masses=masses,
                   grad=gradient_op(index, partition, masses, "T"),
                   curl=curl_op(index, partition, masses, "T"),
                   div=divergence_op(index, partition, masses, "T"),
                   div_n=divergence_op(index, partition, masses, "N"),
                   curl_n=curl_op(index, partition, masses, "N"),
                   grad_n=gradient_op(index, partition, masses, "N"))


# --- structural checks -------------------------------------------------------

def _max_abs(A: sparse.spmatrix) -> float:
    A = sparse.csr_matrix(A)
    A.eliminate_zeros()
    return float(abs(A).max()) if A.nnz else 0.0


def check_complex_property(grad: DiscreteOperator, curl: DiscreteOperator,
                           div: DiscreteOperator) -> dict:
    """Largest entries of ``curl @ grad`` and ``div @ curl``."""
    if not (grad.codomain_kind == curl.domain_kind and curl.codomain_kind == div.domain_kind):
        raise FieldError("operators do not form a chain")
    return {"curl_grad": _max_abs(curl.matrix @ grad.matrix),
            "div_curl": _max_abs(div.matrix @ curl.matrix)}


def adjoint_mismatch(cx: Complex) -> dict:
    """Relative entrywise gap between each dual operator and the adjoint of
    its primal partner (``adj(grad_T) + div_N`` etc.)."""
    out = {}
    for primal, dual, sign in ((cx.grad, cx.div_n, -1.0), (cx.curl, cx.curl_n, 1.0),
                               (cx.div, cx.grad_n, -1.0)):
        adj = adjoint_op(primal, cx.masses).matrix
        gap = _max_abs(adj - sign * dual.matrix)
        scale = max(_max_abs(adj), _max_abs(dual.matrix), np.finfo(float).tiny)
        out[f"{primal.label}/{dual.label}"] = gap / scale
    return out


def check_integration_by_parts(cx: Complex, trials: int = 100, seed: int = 0) -> dict:
    """Residuals of the two integration-by-parts rules on random fields.

    Returns relative residuals ``|<grad u, H> + <u, div_N H>|`` and
    ``|<curl E, H> - <E, curl_N H>|`` (plus the div/grad_N pair), each
    divided by the sum of the magnitudes of the two terms' factors, maxed
    over ``trials``.  ``negative_control`` repeats the first rule with the
    unmasked difference operator, which must leave a boundary term whenever
    ``T`` is non-empty.
    """
    rng = np.random.default_rng(seed)
    idx, M = cx.index, cx.masses
    raw_grad = idx.d0 / idx.h
    worst = {"grad_div": 0.0, "curl_curl": 0.0, "div_grad": 0.0}
    control = 0.0
    for _ in range(trials):
        u = cx.admissible(Field("node", rng.standard_normal(idx.count("node"))))
        H = Field("edge", rng.standard_normal(idx.count("edge")))
        a, b = cx.inner(cx.grad(u), H), cx.inner(u, cx.div_n(H))
        scale = cx.norm(cx.grad(u)) * cx.norm(H) + cx.norm(u) * cx.norm(cx.div_n(H))
        worst["grad_div"] = max(worst["grad_div"], abs(a + b) / scale if scale else 0.0)

        E = cx.admissible(Field("edge", rng.standard_normal(idx.count("edge"))))
        K = Field("face", rng.standard_normal(idx.count("face")))
        a, b = cx.inner(cx.curl(E), K), cx.inner(E, cx.curl_n(K))
        scale = cx.norm(cx.curl(E)) * cx.norm(K) + cx.norm(E) * cx.norm(cx.curl_n(K))
        worst["curl_curl"] = max(worst["curl_curl"], abs(a - b) / scale if scale else 0.0)

        Q = cx.admissible(Field("face", rng.standard_normal(idx.count("face"))))
        p = Field("cell", rng.standard_normal(idx.count("cell")))
        a, b = cx.inner(cx.div(Q), p), cx.inner(Q, cx.grad_n(p))
        scale = cx.norm(cx.div(Q)) * cx.norm(p) + cx.norm(Q) * cx.norm(cx.grad_n(p))
        worst["div_grad"] = max(worst["div_grad"], abs(a + b) / scale if scale else 0.0)

        # negative control: u keeps its T values, raw differences
        v = Field("node", rng.standard_normal(idx.count("node")))
        gv = Field("edge", raw_grad @ v.coeffs)
        a, b = cx.inner(gv, H), cx.inner(v, cx.div_n(H))
        scale = cx.norm(gv) * cx.norm(H) + cx.norm(v) * cx.norm(cx.div_n(H))
        control = max(control, abs(a + b) / scale if scale else 0.0)
    worst["max"] = max(worst.values())
    worst["negative_control"] = control
    return worst


# --- sampling -----------------------------------------------------------------

class InvalidSample(FieldError):
    """Non-finite values produced while sampling an analytic field."""


def sample_field(expr: Callable[[np.ndarray], np.ndarray], index: EntityIndex, kind: str) -> Field:
    """Sample an analytic field on entities of ``kind``.

    ``expr`` maps points ``(m, 3)`` to values: scalars ``(m,)`` for node and
    cell kinds, vectors ``(m, 3)`` for edge (tangential component at the
    midpoint) and face (normal component at the centre) kinds.
    """
    pts = index.positions(kind)
    vals = np.asarray(expr(pts), dtype=float)
    if kind in ("edge", "face"):
        if vals.shape != (len(pts), 3):
            raise FieldError(f"{kind} sampling needs a vector field, got shape {vals.shape}")
        axis = getattr(index, f"{kind}_axis")
        vals = vals[np.arange(len(pts)), axis]
    elif vals.ndim != 1:
        vals = np.broadcast_to(vals, (len(pts),)) if vals.ndim == 0 else vals
        if vals.shape != (len(pts),):
            raise FieldError(f"{kind} sampling needs a scalar field, got shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise InvalidSample("invalid sample: non-finite value")
    return Field(kind, np.array(vals, dtype=float))
