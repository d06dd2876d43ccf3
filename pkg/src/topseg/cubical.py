"""Cubical persistent homology of sublevel/superlevel image filtrations.

Construction: voxels are the vertices of the complex and every higher cell
takes the maximum of its incident voxel values (after reparameterizing
superlevel filtrations to sublevel of 1-I). With this convention the
components of the frame at any threshold are exactly the face-connected
voxel components, so degree-0 persistence always agrees with
``morphology.connected_components``.

Cells are totally ordered by (filtration value, dimension, Fortran-linear
cell index); this simulated strict order makes diagrams reproducible on
plateau-heavy data. Zero-persistence pairs are dropped.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _reduction
from .errors import OracleTooLargeError, PersistenceError
from .grid import BinaryMask, GrayImage, coord_of

SUBLEVEL = "sublevel"
SUPERLEVEL = "superlevel"

ORACLE_CELL_CAP = 50_000
BOTTLENECK_POINT_CAP = 64


@dataclass(frozen=True)
class Filtration:
    """Nested family of binary frames indexed by t in [0, 1].

    The frame at t is {x : I(x) <= t} for sublevel, {x : I(x) >= 1-t} for
    superlevel. Both are realized as the sublevel filtration of
    ``height_field`` (I itself, or 1-I).
    """

    source: GrayImage
    direction: str
    height_field: np.ndarray = field(repr=False, default=None)

    def frame(self, t: float) -> BinaryMask:
        return BinaryMask(self.height_field <= t)


def build_filtration(img: GrayImage, direction: str) -> Filtration:
    if direction not in (SUBLEVEL, SUPERLEVEL):
        raise PersistenceError(f"unknown direction {direction!r}")
    if img.data.min() < 0.0 or img.data.max() > 1.0:
        raise PersistenceError("image values must lie in [0, 1]; normalize first")
    height = img.data if direction == SUBLEVEL else 1.0 - img.data
    return Filtration(img, direction, np.ascontiguousarray(height))


@dataclass(frozen=True)
class PersistencePoint:
    dim: int
    birth: float
    death: float  # math.inf for essential points
    birth_voxel: Tuple[int, ...]
    death_voxel: Optional[Tuple[int, ...]] = None

    @property
    def essential(self) -> bool:
        return np.isinf(self.death)

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass(frozen=True)
class PersistenceDiagram:
    points: Tuple[PersistencePoint, ...]

    @property
    def max_dim(self) -> int:
        return max((p.dim for p in self.points), default=0)

    def in_dim(self, dim: int) -> List[PersistencePoint]:
        return [p for p in self.points if p.dim == dim]

    def betti_at(self, t: float, dim: int) -> int:
        return sum(1 for p in self.in_dim(dim) if p.birth <= t < p.death)

    def multiset(self) -> List[Tuple[int, float, float]]:
        """Sorted (dim, birth, death) triples, for exact diagram comparison."""
        return sorted((p.dim, p.birth, p.death) for p in self.points)

    def to_csv(self) -> str:
        lines = ["dim,birth,death,bx,by,bz,dx,dy,dz"]
        for p in sorted(self.points, key=lambda q: (q.dim, q.birth, q.death)):
            b = list(p.birth_voxel) + [""] * (3 - len(p.birth_voxel))
            if p.death_voxel is None:
                d = ["", "", ""]
            else:
                d = list(p.death_voxel) + [""] * (3 - len(p.death_voxel))
            death = "inf" if p.essential else repr(p.death)
            lines.append(
                f"{p.dim},{p.birth!r},{death},{b[0]},{b[1]},{b[2]},{d[0]},{d[1]},{d[2]}"
            )
        return "\n".join(lines) + "\n"

    def to_svg(self, size: int = 360) -> str:
        """Diagram plot: one dot per point, plus the diagonal."""
        pad = 24
        span = size - 2 * pad
        colors = {0: "#1f77b4", 1: "#ff7f0e", 2: "#2ca02c", 3: "#d62728"}

        def sx(v):
            return pad + v * span

        def sy(v):
            return size - pad - v * span

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
            f'<rect width="{size}" height="{size}" fill="white"/>',
            f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" '
            'stroke="#888" stroke-dasharray="4 3"/>',
        ]
        for p in self.points:
            death = 1.0 if p.essential else p.death
            marker = "3.5" if not p.essential else "5"
            parts.append(
                f'<circle cx="{sx(p.birth):.2f}" cy="{sy(death):.2f}" r="{marker}" '
                f'fill="{colors.get(p.dim, "#555")}" fill-opacity="0.8"/>'
            )
        parts.append("</svg>")
        return "\n".join(parts)


# ---------------------------------------------------------------------------
# engine


class _CellComplex:
    """Cube-map cell data plus the global filtration order, split by dim."""

    def __init__(self, height_field: np.ndarray):
        vshape = np.asarray(height_field.shape, dtype=np.int64)
        cshape = 2 * vshape - 1
        vox_flat = np.ascontiguousarray(height_field.ravel(order="F"))
        values, dims, defv = _reduction.compute_cells(vox_flat, vshape, cshape)
        order = np.lexsort((np.arange(values.size), dims, values))
        self.vshape = vshape
        self.cshape = cshape
        self.values = values
        self.dims = dims
        self.defv = defv
        self.rank_all = np.empty(values.size, dtype=np.int64)
        self.cells_by_dim: Dict[int, np.ndarray] = {}
        dims_ordered = dims[order]
        for p in range(int(vshape.size) + 1):
            cells_p = order[dims_ordered == p]
            self.cells_by_dim[p] = cells_p
            self.rank_all[cells_p] = np.arange(cells_p.size)

    def voxel_coord(self, cell_id: int) -> Tuple[int, ...]:
        return coord_of(tuple(self.vshape), int(self.defv[cell_id]))


def _assemble_points(filt, cx, max_dim) -> PersistenceDiagram:
    d = int(cx.vshape.size)
    pmax = min(d, max_dim + 1)
    points: List[PersistencePoint] = []
    vshape = tuple(int(v) for v in cx.vshape)

    def vox(cell_id):
        return coord_of(vshape, int(cx.defv[cell_id]))

    vertices = cx.cells_by_dim[0]
    edges = cx.cells_by_dim[1]

    # H0: elder-rule union-find over the edges in filtration order.
    dying, creator = _reduction.uf_h0(edges, cx.rank_all, cx.cshape, vertices.size)
    for e in range(edges.size):
        bv = dying[e]
        if bv < 0:
            continue
        bcell = vertices[bv]
        dcell = edges[e]
        tb = float(cx.values[bcell])
        td = float(cx.values[dcell])
        if tb == td:
            continue
        points.append(PersistencePoint(0, tb, td, vox(bcell), vox(dcell)))
    for bv in _reduction.essential_vertices(vertices.size, edges, cx.rank_all, cx.cshape):
        bcell = vertices[bv]
        points.append(PersistencePoint(0, float(cx.values[bcell]), np.inf, vox(bcell)))

    # Higher degrees: column reduction from the top dimension down, clearing
    # columns already known to be births from the dimension above.
    pivot_rows_above: Optional[np.ndarray] = None
    births_by_dim: Dict[int, np.ndarray] = {}
    paired_by_dim: Dict[int, np.ndarray] = {}
    for p in range(pmax, 1, -1):
        cells_p = cx.cells_by_dim[p]
        n_rows = cx.cells_by_dim[p - 1].size
        cleared = np.zeros(cells_p.size, dtype=bool)
        if pivot_rows_above is not None:
            cleared[pivot_rows_above[pivot_rows_above >= 0]] = True
        if cells_p.size:
            bnd = _reduction.build_boundaries(cells_p, cx.rank_all, cx.cshape, p)
            pivot = _reduction.reduce_columns(bnd, cleared, n_rows)
        else:
            pivot = np.empty(0, dtype=np.int64)
        births_by_dim[p] = (pivot == -1) & ~cleared
        paired = np.zeros(n_rows, dtype=bool)
        good = pivot >= 0
        paired[pivot[good]] = True
        paired_by_dim[p - 1] = paired
        cells_prev = cx.cells_by_dim[p - 1]
        for j in np.nonzero(good)[0]:
            bcell = cells_prev[pivot[j]]
            dcell = cells_p[j]
            tb = float(cx.values[bcell])
            td = float(cx.values[dcell])
            if tb == td:
                continue
            points.append(PersistencePoint(p - 1, tb, td, vox(bcell), vox(dcell)))
        pivot_rows_above = pivot

    # Essential classes in degrees 1..max_dim.
    for q in range(1, max_dim + 1):
        if q == 1:
            births = np.asarray(creator)
            cells_q = edges
        elif q in births_by_dim:
            births = births_by_dim[q]
            cells_q = cx.cells_by_dim[q]
        else:
            continue
        paired = paired_by_dim.get(q)
        for j in np.nonzero(births)[0]:
            if paired is not None and paired[j]:
                continue
            bcell = cells_q[j]
            points.append(
                PersistencePoint(q, float(cx.values[bcell]), np.inf, vox(bcell))
            )
    return PersistenceDiagram(tuple(points))


def persistence(filt: Filtration, max_dim: Optional[int] = None) -> PersistenceDiagram:
    """Persistence diagram of the filtration up to homology degree max_dim."""
    d = filt.source.rank
    if max_dim is None:
        max_dim = d - 1
    if max_dim < 0:
        raise PersistenceError("max_dim must be nonnegative")
    max_dim = min(max_dim, d)
    cx = _CellComplex(filt.height_field)
    return _assemble_points(filt, cx, max_dim)


def persistence_h0(filt: Filtration) -> PersistenceDiagram:
    """Degree-0 diagram via the union-find fast path."""
    return persistence(filt, max_dim=0)


def component_at(img: GrayImage, direction: str, t: float, seed: Sequence[int]) -> BinaryMask:
    """Face-connected component of ``seed`` in the level-set frame at t."""
    filt = build_filtration(img, direction)
    frame = filt.height_field <= t
    seed = tuple(int(c) for c in seed)
    if not frame[seed]:
        raise PersistenceError(f"seed {seed} is not active in the frame at t={t}")
    shape = np.asarray(frame.shape, dtype=np.int64)
    flat = np.ascontiguousarray(frame.ravel(order="F"))
    seed_lin = int(np.ravel_multi_index(seed, frame.shape, order="F"))
    out = _reduction.flood_component(flat, shape, seed_lin)
    return BinaryMask(out.reshape(frame.shape, order="F"))


# ---------------------------------------------------------------------------
# brute-force oracle (tests only): naive global boundary-matrix reduction


def oracle_persistence(filt: Filtration, max_dim: Optional[int] = None) -> PersistenceDiagram:
    height = filt.height_field
    d = height.ndim
    if max_dim is None:
        max_dim = d - 1
    max_dim = min(max_dim, d)
    vshape = height.shape
    cshape = tuple(2 * n - 1 for n in vshape)
    ncells = int(np.prod(cshape))
    if ncells > ORACLE_CELL_CAP:
        raise OracleTooLargeError(
            f"{ncells} cells exceed the oracle cap of {ORACLE_CELL_CAP}"
        )

    def incident_voxels(coord):
        choices = []
        for c in coord:
            choices.append([c // 2] if c % 2 == 0 else [(c - 1) // 2, (c + 1) // 2])
        return list(itertools.product(*choices))

    def vox_lin(v):
        return int(np.ravel_multi_index(v, vshape, order="F"))

    cells = []
    for coord in itertools.product(*(range(e) for e in cshape)):
        dim = sum(c % 2 for c in coord)
        inc = incident_voxels(coord)
        vals = [(float(height[v]), vox_lin(v), v) for v in inc]
        value = max(v[0] for v in vals)
        defining = min((v for v in vals if v[0] == value), key=lambda v: v[1])[2]
        lin = int(np.ravel_multi_index(coord, cshape, order="F"))
        cells.append((value, dim, lin, coord, defining))
    cells.sort(key=lambda c: (c[0], c[1], c[2]))
    pos_of = {c[2]: i for i, c in enumerate(cells)}

    strides = np.cumprod([1] + list(cshape[:-1]))

    def boundary(coord, lin):
        rows = set()
        for axis, c in enumerate(coord):
            if c % 2 == 1:
                rows.add(pos_of[lin - int(strides[axis])])
                rows.add(pos_of[lin + int(strides[axis])])
        return rows

    columns = [boundary(c[3], c[2]) for c in cells]
    low_of: Dict[int, int] = {}
    pair_of_row: Dict[int, int] = {}
    for j, col in enumerate(columns):
        while col:
            low = max(col)
            k = low_of.get(low)
            if k is None:
                break
            col ^= columns[k]
        if col:
            low = max(col)
            low_of[low] = j
            pair_of_row[low] = j

    points = []
    paired_cols = set(pair_of_row.values())
    for i, cell in enumerate(cells):
        value, dim, lin, coord, defining = cell
        if i in pair_of_row:  # birth cell with a matching death
            j = pair_of_row[i]
            td = cells[j][0]
            if dim <= max_dim and value != td:
                points.append(
                    PersistencePoint(dim, value, td, defining, cells[j][4])
                )
        elif i not in paired_cols and not columns[i]:
            if dim <= max_dim:
                points.append(PersistencePoint(dim, value, np.inf, defining))
    return PersistenceDiagram(tuple(points))


# ---------------------------------------------------------------------------
# bottleneck distance (exact, small instances)


def _matchable(pts1, pts2, r):
    """Perfect matching test allowing diagonal projections, all costs <= r."""
    n1, n2 = len(pts1), len(pts2)
    # Left nodes: points of diagram 1 and one diagonal slot per point of 2.
    # Right nodes: points of diagram 2 and one diagonal slot per point of 1.
    eps = 1e-12
    adj: List[List[int]] = []
    for i, (b1, d1) in enumerate(pts1):
        nbrs = [
            j
            for j, (b2, d2) in enumerate(pts2)
            if max(abs(b1 - b2), abs(d1 - d2)) <= r + eps
        ]
        if (d1 - b1) / 2.0 <= r + eps:
            nbrs.append(n2 + i)
        adj.append(nbrs)
    for j, (b2, d2) in enumerate(pts2):
        nbrs = [j] if (d2 - b2) / 2.0 <= r + eps else []
        nbrs.extend(range(n2, n2 + n1))
        adj.append(nbrs)

    match_r = [-1] * (n2 + n1)

    def augment(u, seen):
        for v in adj[u]:
            if v in seen:
                continue
            seen.add(v)
            if match_r[v] == -1 or augment(match_r[v], seen):
                match_r[v] = u
                return True
        return False

    return all(augment(u, set()) for u in range(n1 + n2))


def bottleneck_distance(d1: PersistenceDiagram, d2: PersistenceDiagram, dim: int) -> float:
    """Exact bottleneck distance between the degree-``dim`` sub-diagrams."""
    fin1 = [(p.birth, p.death) for p in d1.in_dim(dim) if not p.essential]
    fin2 = [(p.birth, p.death) for p in d2.in_dim(dim) if not p.essential]
    ess1 = sorted(p.birth for p in d1.in_dim(dim) if p.essential)
    ess2 = sorted(p.birth for p in d2.in_dim(dim) if p.essential)
    if len(ess1) != len(ess2):
        return float("inf")
    ess_cost = max((abs(a - b) for a, b in zip(ess1, ess2)), default=0.0)
    if len(fin1) + len(fin2) > BOTTLENECK_POINT_CAP:
        raise PersistenceError(
            f"bottleneck matcher limited to {BOTTLENECK_POINT_CAP} off-diagonal points"
        )
    candidates = {0.0, ess_cost}
    for b1, dd1 in fin1:
        candidates.add((dd1 - b1) / 2.0)
        for b2, dd2 in fin2:
            candidates.add(max(abs(b1 - b2), abs(dd1 - dd2)))
    for b2, dd2 in fin2:
        candidates.add((dd2 - b2) / 2.0)
    best = max(candidates)
    for r in sorted(candidates):
        if _matchable(fin1, fin2, r):
            best = r
            break
    return max(best, ess_cost)
