"""Numba kernels for the cubical persistence engine.

Cells live on the "cube map" grid of extents 2*n-1 per axis: a voxel sits at
even coordinates, a cell's dimension is its number of odd coordinates, and a
cell's filtration value is the max over its incident voxels (sublevel
convention). All linear indices are Fortran order.
"""

import numpy as np
from numba import njit
from numba.typed import List


@njit(cache=True)
def compute_cells(vox_flat, vshape, cshape):
    """Per-cell filtration value, dimension, and defining voxel.

    The defining voxel is the incident voxel of maximal value, ties broken by
    smaller voxel linear index.
    """
    nd = vshape.size
    ncells = 1
    for i in range(nd):
        ncells *= cshape[i]
    vstr = np.empty(nd, np.int64)
    s = 1
    for i in range(nd):
        vstr[i] = s
        s *= vshape[i]
    values = np.empty(ncells, np.float64)
    dims = np.empty(ncells, np.uint8)
    defv = np.empty(ncells, np.int64)
    coord = np.empty(nd, np.int64)
    for cid in range(ncells):
        rem = cid
        d = 0
        for i in range(nd):
            coord[i] = rem % cshape[i]
            rem //= cshape[i]
            if coord[i] & 1:
                d += 1
        best = 0.0
        bestv = -1
        for m in range(1 << d):
            vid = 0
            k = 0
            for i in range(nd):
                ci = coord[i]
                if ci & 1:
                    if (m >> k) & 1:
                        vx = (ci + 1) >> 1
                    else:
                        vx = (ci - 1) >> 1
                    k += 1
                else:
                    vx = ci >> 1
                vid += vx * vstr[i]
            val = vox_flat[vid]
            if bestv < 0 or val > best or (val == best and vid < bestv):
                best = val
                bestv = vid
        values[cid] = best
        dims[cid] = np.uint8(d)
        defv[cid] = bestv
    return values, dims, defv


@njit(cache=True)
def _find(parent, v):
    root = v
    while parent[root] != root:
        root = parent[root]
    while parent[v] != root:
        nxt = parent[v]
        parent[v] = root
        v = nxt
    return root


@njit(cache=True)
def uf_h0(edge_cells, rank_all, cshape, n_vertices):
    """Elder-rule union-find over edges in filtration order.

    Returns (dying_vertex, creator): per edge, the dim-0 rank of the component
    birth vertex killed by that edge (-1 for cycle-creating edges), and a mask
    of creator edges.
    """
    nd = cshape.size
    cstr = np.empty(nd, np.int64)
    s = 1
    for i in range(nd):
        cstr[i] = s
        s *= cshape[i]
    n_edges = edge_cells.size
    parent = np.arange(n_vertices)
    birth = np.arange(n_vertices)
    dying = np.full(n_edges, -1, np.int64)
    creator = np.zeros(n_edges, np.bool_)
    for e in range(n_edges):
        cid = edge_cells[e]
        rem = cid
        axis = -1
        for i in range(nd):
            ci = rem % cshape[i]
            rem //= cshape[i]
            if ci & 1:
                axis = i
        v1 = rank_all[cid - cstr[axis]]
        v2 = rank_all[cid + cstr[axis]]
        r1 = _find(parent, v1)
        r2 = _find(parent, v2)
        if r1 == r2:
            creator[e] = True
            continue
        b1 = birth[r1]
        b2 = birth[r2]
        parent[r2] = r1
        if b1 < b2:
            birth[r1] = b1
            dying[e] = b2
        else:
            birth[r1] = b2
            dying[e] = b1
    return dying, creator


@njit(cache=True)
def essential_vertices(n_vertices, edge_cells, rank_all, cshape):
    """Dim-0 ranks of the eldest vertex of each final component."""
    nd = cshape.size
    cstr = np.empty(nd, np.int64)
    s = 1
    for i in range(nd):
        cstr[i] = s
        s *= cshape[i]
    parent = np.arange(n_vertices)
    birth = np.arange(n_vertices)
    for e in range(edge_cells.size):
        cid = edge_cells[e]
        rem = cid
        axis = -1
        for i in range(nd):
            ci = rem % cshape[i]
            rem //= cshape[i]
            if ci & 1:
                axis = i
        r1 = _find(parent, rank_all[cid - cstr[axis]])
        r2 = _find(parent, rank_all[cid + cstr[axis]])
        if r1 != r2:
            parent[r2] = r1
            if birth[r2] < birth[r1]:
                birth[r1] = birth[r2]
    out = np.empty(n_vertices, np.int64)
    k = 0
    for v in range(n_vertices):
        if parent[v] == v:
            out[k] = birth[v]
            k += 1
    return out[:k]


@njit(cache=True)
def build_boundaries(cells_p, rank_all, cshape, p):
    """Sorted boundary rows (dim p-1 ranks) of each dim-p cell."""
    nd = cshape.size
    cstr = np.empty(nd, np.int64)
    s = 1
    for i in range(nd):
        cstr[i] = s
        s *= cshape[i]
    ncols = cells_p.size
    bnd = np.empty((ncols, 2 * p), np.int64)
    for j in range(ncols):
        cid = cells_p[j]
        rem = cid
        k = 0
        for i in range(nd):
            ci = rem % cshape[i]
            rem //= cshape[i]
            if ci & 1:
                bnd[j, k] = rank_all[cid - cstr[i]]
                bnd[j, k + 1] = rank_all[cid + cstr[i]]
                k += 2
        # insertion sort; rows per column are few (2p)
        for a in range(1, 2 * p):
            key = bnd[j, a]
            b = a - 1
            while b >= 0 and bnd[j, b] > key:
                bnd[j, b + 1] = bnd[j, b]
                b -= 1
            bnd[j, b + 1] = key
    return bnd


@njit(cache=True)
def _symdiff(a, b):
    out = np.empty(a.size + b.size, np.int64)
    i = 0
    j = 0
    k = 0
    while i < a.size and j < b.size:
        if a[i] < b[j]:
            out[k] = a[i]
            i += 1
            k += 1
        elif a[i] > b[j]:
            out[k] = b[j]
            j += 1
            k += 1
        else:
            i += 1
            j += 1
    while i < a.size:
        out[k] = a[i]
        i += 1
        k += 1
    while j < b.size:
        out[k] = b[j]
        j += 1
        k += 1
    return out[:k].copy()


@njit(cache=True)
def reduce_columns(bnd, cleared, n_rows):
    """Column reduction over GF(2) with pre-cleared columns.

    Columns arrive in filtration order. Returns the pivot row per column
    (-1 for zero or cleared columns).
    """
    ncols = bnd.shape[0]
    pivot = np.full(ncols, -1, np.int64)
    owner = np.full(n_rows, -1, np.int64)
    cols = List()
    empty = np.empty(0, np.int64)
    for j in range(ncols):
        if cleared[j]:
            cols.append(empty)
            continue
        cur = bnd[j].copy()
        while cur.size > 0:
            low = cur[cur.size - 1]
            k = owner[low]
            if k < 0:
                break
            cur = _symdiff(cur, cols[k])
        cols.append(cur)
        if cur.size > 0:
            pivot[j] = cur[cur.size - 1]
            owner[cur[cur.size - 1]] = j
    return pivot


@njit(cache=True)
def component_growth_counts(sorted_vox, height_flat, shape, seed, thresholds):
    """Size of the seed's face-connected component at each threshold.

    ``sorted_vox`` lists voxel linear indices by ascending height value;
    counts[i] is the component size in the frame {height <= thresholds[i]}
    (0 while the seed is inactive).
    """
    nd = shape.size
    strides = np.empty(nd, np.int64)
    s = 1
    for i in range(nd):
        strides[i] = s
        s *= shape[i]
    n = height_flat.size
    parent = np.full(n, -1, np.int64)
    size = np.zeros(n, np.int64)
    counts = np.zeros(thresholds.size, np.int64)
    coord = np.empty(nd, np.int64)
    k = 0
    for ti in range(thresholds.size):
        t = thresholds[ti]
        while k < n and height_flat[sorted_vox[k]] <= t:
            v = sorted_vox[k]
            k += 1
            parent[v] = v
            size[v] = 1
            rem = v
            for i in range(nd):
                coord[i] = rem % shape[i]
                rem //= shape[i]
            for i in range(nd):
                for sgn in range(2):
                    if sgn == 0:
                        if coord[i] == 0:
                            continue
                        w = v - strides[i]
                    else:
                        if coord[i] == shape[i] - 1:
                            continue
                        w = v + strides[i]
                    if parent[w] < 0:
                        continue
                    rv = _find(parent, v)
                    rw = _find(parent, w)
                    if rv != rw:
                        parent[rw] = rv
                        size[rv] += size[rw]
        if parent[seed] >= 0:
            counts[ti] = size[_find(parent, seed)]
    return counts


@njit(cache=True)
def flood_component(frame_flat, shape, seed):
    """Face-connected component of ``seed`` in a flat boolean frame."""
    nd = shape.size
    strides = np.empty(nd, np.int64)
    s = 1
    for i in range(nd):
        strides[i] = s
        s *= shape[i]
    n = frame_flat.size
    out = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    top = 0
    stack[top] = seed
    top += 1
    out[seed] = True
    coord = np.empty(nd, np.int64)
    while top > 0:
        top -= 1
        v = stack[top]
        rem = v
        for i in range(nd):
            coord[i] = rem % shape[i]
            rem //= shape[i]
        for i in range(nd):
            if coord[i] > 0:
                w = v - strides[i]
                if frame_flat[w] and not out[w]:
                    out[w] = True
                    stack[top] = w
                    top += 1
            if coord[i] < shape[i] - 1:
                w = v + strides[i]
                if frame_flat[w] and not out[w]:
                    out[w] = True
                    stack[top] = w
                    top += 1
    return out
