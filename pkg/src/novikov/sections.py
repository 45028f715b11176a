"""All section loops of a mesh at one plane offset, with their homology data.

For an integer direction B the planes <B, x> = s + k (k integer) cut the
mesh in finitely many closed loops.  Each loop gets two invariants:

* its translation class in H1 of the torus (sum of frame changes), and
* its intersection numbers with a basis of H1 of the surface, obtained by
  counting signed crossings with the edges of the basis cycles.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from math import gcd

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .mesh import PeriodicMesh


@dataclass(frozen=True)
class LevelLoops:
    """Section loops at one offset.

    Attributes:
        translations: Integer classes in the torus, shape (L, 3).
        intersections: Intersection numbers with the surface basis, shape (L, n_gen).
        component: Mesh component of each loop.
        crossings: Number of edge crossings of each loop.
    """

    translations: np.ndarray
    intersections: np.ndarray
    component: np.ndarray
    crossings: np.ndarray


@dataclass(frozen=True)
class HeightData:
    """Corner heights <B, lifted corner> in a scale where one lattice step is ``period``."""

    corner: np.ndarray   # (F, 3) int64 or float
    vertex: np.ndarray   # (V,)
    period: object       # int for exact meshes, 1.0 otherwise
    exact: bool


def height_data(mesh: PeriodicMesh, B) -> HeightData:
    """Heights of the mesh corners along an integer direction.

    Exact meshes use integer heights scaled by twice the common denominator,
    so level comparisons never round.
    """
    Bi = np.asarray(B, dtype=np.int64)
    if mesh.exact:
        den = reduce(lambda a, b: a * b // gcd(a, b), (x.denominator for p in mesh.exact_vertices for x in p), 1)
        scale = 2 * den
        hv = np.array([int(sum(Fraction(int(b)) * x for b, x in zip(Bi, p)) * scale) for p in mesh.exact_vertices],
                      dtype=np.int64)
        corner = hv[mesh.faces] + scale * (mesh.corner_offsets @ Bi)
        return HeightData(corner, hv, scale, True)
    hv = mesh.vertices @ Bi.astype(float)
    corner = mesh.lifted_faces @ Bi.astype(float)
    return HeightData(corner, hv, 1.0, False)


def pl_critical_heights(mesh: PeriodicMesh, hd: HeightData) -> np.ndarray:
    """Heights (mod one period) of vertices that are critical for the PL height.

    A vertex is PL-regular when the height differences to its link change
    sign exactly twice around it.
    """
    h = hd.corner
    changes = np.zeros(mesh.n_vertices, dtype=np.int64)
    for i in range(3):
        a = np.sign(h[:, (i + 1) % 3] - h[:, i])
        b = np.sign(h[:, (i + 2) % 3] - h[:, i])
        np.add.at(changes, mesh.faces[:, i], (a != b).astype(np.int64))
    crit = changes != 2
    return np.mod(hd.vertex[crit], hd.period)


def sample_levels(crit: np.ndarray, period, exact: bool) -> list:
    """One offset inside every gap between consecutive critical heights (mod period)."""
    if exact:
        vals = sorted(set(int(x) for x in crit))
        if not vals:
            return [period // 2 + 1 if period > 2 else 1]
        out = []
        for a, b in zip(vals, vals[1:] + [vals[0] + period]):
            mid2 = a + b
            if mid2 % 2:
                raise ValueError("height scale too coarse for exact midpoints")
            out.append((mid2 // 2) % period)
        return sorted(set(out))
    vals = np.unique(np.round(np.sort(crit), 13))
    if not len(vals):
        return [0.5]
    nxt = np.append(vals[1:], vals[0] + period)
    gap = nxt - vals
    keep = gap > 1e-9
    return sorted(float(x) for x in np.mod(0.5 * (vals + nxt)[keep], period))


def level_loops(mesh: PeriodicMesh, B, level, hd: HeightData | None = None) -> LevelLoops:
    """Every section loop of the planes <B, x> = level + k, k integer.

    Args:
        mesh: Closed oriented periodic mesh.
        B: Integer direction.
        level: Offset in the height scale of ``hd`` (an int for exact meshes).
        hd: Precomputed :func:`height_data`.
    """
    hd = hd or height_data(mesh, B)
    Bi = np.asarray(B, dtype=np.int64)
    Q = hd.period
    h = hd.corner
    hb = mesh.homology_basis
    ngen = hb.sigma.shape[1]
    hmin, hmax = h.min(1), h.max(1)
    if hd.exact:
        kmin = -((level - hmin) // Q)          # smallest k with level + kQ > hmin
        kmax = (hmax - level - 1) // Q         # largest k with level + kQ < hmax
    else:
        kmin = np.ceil((hmin - level) / Q).astype(np.int64)
        kmax = np.floor((hmax - level) / Q).astype(np.int64)
    cnt = np.maximum(kmax - kmin + 1, 0)
    if cnt.sum() == 0:
        z = np.zeros(0, dtype=np.int64)
        return LevelLoops(np.zeros((0, 3), dtype=np.int64), np.zeros((0, ngen), dtype=np.int64), z, z)
    face = np.repeat(np.arange(mesh.n_faces), cnt)
    k = np.repeat(kmin, cnt) + (np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
    t = level + k * Q
    pos = h[face] > t[:, None]
    nxt = np.roll(pos, -1, axis=1)
    entry = np.argmax(~pos & nxt, axis=1)
    exit_ = np.argmax(pos & ~nxt, axis=1)
    fe, fs, off = mesh.face_edges, mesh.face_edge_signs, mesh.corner_offsets

    def node_data(side):
        e = fe[face, side]
        base_corner = np.where(fs[face, side] > 0, side, (side + 1) % 3)
        delta = off[face, base_corner]
        return e, k - delta @ Bi, delta

    e_in, k_in, d_in = node_data(entry)
    e_out, k_out, d_out = node_data(exit_)
    keys = np.concatenate([np.column_stack([e_in, k_in]), np.column_stack([e_out, k_out])])
    ukeys, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    S = len(face)
    a, b = inv[:S], inv[S:]
    n_nodes = len(ukeys)
    g = sparse.coo_matrix((np.ones(S), (a, b)), shape=(n_nodes, n_nodes))
    nloops, lab = csgraph.connected_components(g, directed=False)
    seg_loop = lab[a]
    trans = np.zeros((nloops, 3), dtype=np.int64)
    np.add.at(trans, seg_loop, d_out - d_in)
    # intersection numbers: signed crossings with the basis cycles
    edges = mesh.edges
    node_e = ukeys[:, 0]
    dh = hd.vertex[edges[node_e, 1]] - hd.vertex[edges[node_e, 0]] + (edges[node_e, 2:] @ Bi) * Q
    sgn = np.sign(dh).astype(np.int64)
    inc = sparse.csr_matrix((sgn, (lab, node_e)), shape=(nloops, mesh.n_edges))
    inter = np.asarray((inc @ hb.sigma).todense(), dtype=np.int64).reshape(nloops, ngen)
    comp = mesh.vertex_component[edges[node_e, 0]]
    loop_comp = np.zeros(nloops, dtype=np.int64)
    loop_comp[lab] = comp
    crossings = np.bincount(lab, minlength=nloops)
    return LevelLoops(trans, inter, loop_comp, crossings)
