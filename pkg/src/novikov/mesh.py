"""Periodic triangulated level surfaces in the 3-torus.

A :class:`PeriodicMesh` stores vertex positions in the unit cube together
with one integer wrap vector per directed triangle edge: the lattice
translation picked up when walking from the edge's first vertex to its
second one in a continuous lift.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .fields import TrigField
from .intmath import int_rank


class MeshError(ValueError):
    """Malformed mesh data or a violated mesh invariant."""


class NearCriticalWarning(UserWarning):
    """The requested level passes close to a critical value of the field."""


@dataclass(frozen=True)
class ComponentTopology:
    genus: int
    rank: int
    euler: int
    n_vertices: int
    n_faces: int


@dataclass(frozen=True)
class SurfaceTopology:
    """Genus and topological rank of every connected component."""

    components: tuple[ComponentTopology, ...]
    rank: int

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def genus(self) -> int:
        """Total genus (sum over components)."""
        return sum(c.genus for c in self.components)

    @property
    def genera(self) -> tuple[int, ...]:
        return tuple(c.genus for c in self.components)


@dataclass(frozen=True)
class HomologyBasis:
    """Tree-cotree generators of H1 of a mesh.

    Attributes:
        sigma: Sparse (n_edges, n_gen) matrix of signed edge multiplicities.
        wraps: Integer (n_gen, 3) classes of the generators in the torus.
        component: Component label of each generator.
    """

    sigma: sparse.csr_matrix
    wraps: np.ndarray
    component: np.ndarray


@dataclass(frozen=True, eq=False)
class PeriodicMesh:
    """Closed, consistently oriented triangulated surface in the 3-torus.

    Attributes:
        vertices: Float positions in [0, 1)^3, shape (V, 3).
        faces: Vertex indices, shape (F, 3).
        wraps: Integer wrap vectors of edges (0->1, 1->2, 2->0), shape (F, 3, 3).
        exact_vertices: Rational positions when the mesh is exact, else None.
    """

    vertices: np.ndarray
    faces: np.ndarray
    wraps: np.ndarray
    exact_vertices: tuple[tuple[Fraction, Fraction, Fraction], ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        w = np.asarray(self.wraps, dtype=np.int64).reshape(-1, 3, 3)
        for name, arr in (("vertices", v), ("faces", f), ("wraps", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def exact(self) -> bool:
        return self.exact_vertices is not None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def is_empty(self) -> bool:
        return self.n_faces == 0

    # ------------------------------------------------------------------ structure
    @cached_property
    def corner_offsets(self) -> np.ndarray:
        """Lattice offset of each face corner in the face's own lift, shape (F, 3, 3)."""
        m = np.zeros_like(self.wraps)
        m[:, 1] = self.wraps[:, 0]
        m[:, 2] = -self.wraps[:, 2]
        return m

    @cached_property
    def lifted_faces(self) -> np.ndarray:
        """Corner positions of every face in a continuous lift, shape (F, 3, 3)."""
        return self.vertices[self.faces] + self.corner_offsets

    @cached_property
    def _edges(self):
        F = self.n_faces
        u = self.faces.reshape(-1)
        v = np.roll(self.faces, -1, axis=1).reshape(-1)
        w = self.wraps.reshape(-1, 3)
        wpos = (w[:, 0] > 0) | ((w[:, 0] == 0) & ((w[:, 1] > 0) | ((w[:, 1] == 0) & (w[:, 2] > 0))))
        canon = (u < v) | ((u == v) & wpos)
        cu = np.where(canon, u, v)
        cv = np.where(canon, v, u)
        cw = np.where(canon[:, None], w, -w)
        keys = np.column_stack([cu, cv, cw])
        uniq, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        sign = np.where(canon, 1, -1)
        return uniq, inv.reshape(F, 3), sign.reshape(F, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Canonical undirected edges as rows (u, v, wx, wy, wz)."""
        return self._edges[0]

    @property
    def face_edges(self) -> np.ndarray:
        """Edge id of each face side (i -> i+1), shape (F, 3)."""
        return self._edges[1]

    @property
    def face_edge_signs(self) -> np.ndarray:
        """+1 when the face side runs along the canonical edge direction."""
        return self._edges[2]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def validate(self) -> None:
        """Check the closed-surface and wrap invariants.

        Raises:
            MeshError: With a diagnostic naming the first offending element.
        """
        if self.n_faces == 0:
            return
        if self.faces.min() < 0 or self.faces.max() >= self.n_vertices:
            raise MeshError("face references a vertex index out of range")
        if np.any((self.vertices < 0) | (self.vertices >= 1)):
            raise MeshError("vertex outside the fundamental cube [0,1)^3")
        bad = np.nonzero(np.any(self.wraps.sum(axis=1) != 0, axis=1))[0]
        if len(bad):
            raise MeshError(f"wrap vectors around face {bad[0]} do not sum to zero")
        _, fe, sg, counts = self._edges
        if np.any(counts != 2):
            e = int(np.nonzero(counts != 2)[0][0])
            raise MeshError(f"edge {tuple(self.edges[e])} is shared by {counts[e]} faces (need 2)")
        tot = np.zeros(self.n_edges, dtype=np.int64)
        np.add.at(tot, fe.reshape(-1), sg.reshape(-1))
        if np.any(tot != 0):
            e = int(np.nonzero(tot)[0][0])
            raise MeshError(f"faces around edge {tuple(self.edges[e])} are inconsistently oriented")

    @cached_property
    def face_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor face and its local side index across each face side, both (F, 3)."""
        fe = self.face_edges.reshape(-1)
        order = np.argsort(fe, kind="stable")
        pair = order.reshape(-1, 2)
        nbr = np.empty(len(fe), dtype=np.int64)
        nbr[pair[:, 0]] = pair[:, 1]
        nbr[pair[:, 1]] = pair[:, 0]
        return (nbr // 3).reshape(-1, 3), (nbr % 3).reshape(-1, 3)

    @cached_property
    def _components(self) -> tuple[int, np.ndarray, np.ndarray]:
        e = self.edges
        V = self.n_vertices
        g = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(V, V))
        n, lab = csgraph.connected_components(g, directed=False)
        return n, lab, lab[self.faces[:, 0]]

    @property
    def vertex_component(self) -> np.ndarray:
        return self._components[1]

    @property
    def face_component(self) -> np.ndarray:
        return self._components[2]

    @property
    def n_components(self) -> int:
        return self._components[0] if self.n_faces else 0

    # ------------------------------------------------------------------ homology
    @cached_property
    def homology_basis(self) -> HomologyBasis:
        """Tree-cotree generators of H1 with their torus classes."""
        E, V, F = self.n_edges, self.n_vertices, self.n_faces
        edges = self.edges
        ncomp, vlab, flab = self._components
        if F == 0:
            return HomologyBasis(sparse.csr_matrix((0, 0), dtype=np.int64),
                                 np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))
        # primal spanning forest, one edge per vertex pair
        in_tree = np.zeros(E, dtype=bool)
        parent = np.full(V, -1, dtype=np.int64)
        parent_edge = np.full(V, -1, dtype=np.int64)
        parent_dir = np.zeros(V, dtype=np.int64)
        pot = np.zeros((V, 3), dtype=np.int64)
        depth = np.zeros(V, dtype=np.int64)
        pair_edge = {}
        for i, (a, b) in enumerate(edges[:, :2]):
            if a != b:
                pair_edge.setdefault((int(a), int(b)), i)
        ids = np.array(sorted(pair_edge.values()), dtype=np.int64)
        g = sparse.coo_matrix((np.ones(len(ids)), (edges[ids, 0], edges[ids, 1])), shape=(V, V)).tocsr()
        roots = [int(np.nonzero(vlab == c)[0][0]) for c in range(ncomp)]
        for r in roots:
            order, pred = csgraph.breadth_first_order(g, r, directed=False, return_predecessors=True)
            for x in order[1:]:
                p = int(pred[x])
                a, b = (p, int(x)) if p < x else (int(x), p)
                eid = pair_edge[(a, b)]
                in_tree[eid] = True
                parent[x], parent_edge[x] = p, eid
                w = edges[eid, 2:]
                # wrap from parent to child
                step = w if edges[eid, 0] == p else -w
                parent_dir[x] = 1 if edges[eid, 0] == p else -1
                pot[x] = pot[p] + step
                depth[x] = depth[p] + 1
        # dual spanning forest over the remaining edges
        fe = self.face_edges
        ef = np.full((E, 2), -1, dtype=np.int64)
        flat = np.argsort(fe.reshape(-1), kind="stable").reshape(-1, 2) // 3
        ef[:, 0], ef[:, 1] = flat[:, 0], flat[:, 1]
        cand = np.nonzero(~in_tree)[0]
        dpair = {}
        for i in cand:
            a, b = sorted((int(ef[i, 0]), int(ef[i, 1])))
            if a != b:
                dpair.setdefault((a, b), int(i))
        dids = np.array(sorted(dpair.values()), dtype=np.int64)
        in_cotree = np.zeros(E, dtype=bool)
        if len(dids):
            dg = sparse.coo_matrix((np.ones(len(dids)) , (ef[dids, 0], ef[dids, 1])), shape=(F, F)).tocsr()
            for c in range(ncomp):
                r = int(np.nonzero(flab == c)[0][0])
                order, pred = csgraph.breadth_first_order(dg, r, directed=False, return_predecessors=True)
                for x in order[1:]:
                    a, b = sorted((int(pred[x]), int(x)))
                    in_cotree[dpair[(a, b)]] = True
        gens = np.nonzero(~in_tree & ~in_cotree)[0]
        rows, cols, vals = [], [], []
        W = np.zeros((len(gens), 3), dtype=np.int64)
        comp = np.zeros(len(gens), dtype=np.int64)
        for j, e in enumerate(gens):
            u, v = int(edges[e, 0]), int(edges[e, 1])
            W[j] = pot[u] + edges[e, 2:] - pot[v]
            comp[j] = vlab[u]
            acc = {int(e): 1}
            # walk u up to the root (edges traversed child->parent appear with -parent_dir)
            x = u
            while parent[x] >= 0:
                pe = int(parent_edge[x])
                acc[pe] = acc.get(pe, 0) + int(parent_dir[x])  # root->u direction
                x = int(parent[x])
            x = v
            while parent[x] >= 0:
                pe = int(parent_edge[x])
                acc[pe] = acc.get(pe, 0) - int(parent_dir[x])  # v->root direction
                x = int(parent[x])
            for k, s in acc.items():
                if s:
                    rows.append(k)
                    cols.append(j)
                    vals.append(s)
        sigma = sparse.csr_matrix((vals, (rows, cols)), shape=(E, len(gens)), dtype=np.int64)
        return HomologyBasis(sigma, W, comp)

    def topology(self) -> SurfaceTopology:
        """Genus and topological rank per connected component."""
        self.validate()
        if self.n_faces == 0:
            return SurfaceTopology((), 0)
        ncomp, vlab, flab = self._components
        elab = vlab[self.edges[:, 0]]
        hb = self.homology_basis
        comps = []
        for c in range(ncomp):
            nv = int(np.sum(vlab == c))
            nf = int(np.sum(flab == c))
            ne = int(np.sum(elab == c))
            chi = nv - ne + nf
            if chi % 2:
                raise MeshError(f"component {c} has odd Euler characteristic {chi}")
            comps.append(ComponentTopology((2 - chi) // 2, int_rank(hb.wraps[hb.component == c].tolist()),
                                           chi, nv, nf))
        return SurfaceTopology(tuple(comps), int_rank(hb.wraps.tolist()))

    # ------------------------------------------------------------------ transforms
    def translated(self, shift) -> "PeriodicMesh":
        """Rigid translation by ``shift`` in the torus (wraps recomputed)."""
        if self.exact:
            fs = tuple(Fraction(x) for x in shift)
            lifted = [tuple(p[i] + fs[i] for i in range(3)) for p in self.exact_vertices]
            ex = tuple(tuple(x - (x.numerator // x.denominator) for x in p) for p in lifted)
            k = np.array([[x.numerator // x.denominator for x in p] for p in lifted], dtype=np.int64)
            verts = np.array([[float(x) for x in p] for p in ex])
        else:
            lifted = self.vertices + np.asarray(shift, dtype=float)
            k = np.floor(lifted).astype(np.int64)
            verts = lifted - k
            verts[verts >= 1.0] = 0.0
            ex = None
        kf = k[self.faces]
        w = self.wraps + np.roll(kf, -1, axis=1) - kf
        return PeriodicMesh(verts, self.faces.copy(), w, ex)

    def heights(self, direction) -> np.ndarray:
        """<direction, lifted corner> for every face corner, shape (F, 3)."""
        return self.lifted_faces @ np.asarray(direction, dtype=float)


def topology(mesh: PeriodicMesh) -> SurfaceTopology:
    """Genus and topological rank of ``mesh``."""
    return mesh.topology()


def field_translations(field: TrigField) -> np.ndarray:
    """Translations modulo the unit lattice that leave ``field`` invariant.

    These are the t with <k, t> integral for every frequency k; their number
    is the index of the frequency lattice in the integer lattice.
    """
    K = np.asarray(field.freqs, dtype=np.int64)
    n = field.dimension
    if K.size == 0 or int_rank(K.tolist()) < n:
        return np.zeros((1, n))
    minors = [abs(round(np.linalg.det(K[list(rows)].astype(float))))
              for rows in itertools.combinations(range(len(K)), n)]
    index = 0
    for d in minors:
        index = math.gcd(index, int(d))
    cand = np.array(list(itertools.product(range(index), repeat=n)), dtype=np.int64)
    ok = np.all((cand @ K.T) % index == 0, axis=1)
    return cand[ok] / index


def quotient_topology(field: TrigField, mesh: PeriodicMesh) -> SurfaceTopology:
    """Topology of the level surface in the smallest period torus of ``field``.

    Components are grouped into orbits of the translation group of
    :func:`field_translations`; each orbit contributes one quotient surface
    whose Euler characteristic is that of a representative divided by its
    stabilizer order.  The mesh grid must be mapped to itself by the group
    (even resolutions suffice for half-period translations).  Ranks are
    reported from the unit torus.
    """
    base = mesh.topology()
    group = field_translations(field)
    if len(group) == 1:
        return base
    comp = mesh.vertex_component
    tree = cKDTree(mesh.vertices, boxsize=1.0)
    reps = [int(np.flatnonzero(comp == k)[0]) for k in range(base.n_components)]
    seen, out = set(), []
    for k, v in enumerate(reps):
        if k in seen:
            continue
        orbit = set()
        for t in group:
            _, j = tree.query((mesh.vertices[v] + t) % 1.0)
            orbit.add(int(comp[j]))
        seen |= orbit
        stab = len(group) // len(orbit)
        ct = base.components[k]
        if ct.euler % stab:
            raise MeshError("translation group does not act freely on the mesh")
        chi = ct.euler // stab
        out.append(ComponentTopology((2 - chi) // 2, ct.rank, chi, ct.n_vertices // stab, ct.n_faces // stab))
    return SurfaceTopology(tuple(out), base.rank)


# ---------------------------------------------------------------------- extraction
_PERMS = list(itertools.permutations(range(3)))
_EYE = np.eye(3, dtype=np.int64)
# corner offsets of the 6 Kuhn tetrahedra of the unit cube
_TET = np.array([[np.zeros(3, dtype=np.int64), _EYE[p[0]], _EYE[p[0]] + _EYE[p[1]], np.ones(3, dtype=np.int64)]
                 for p in _PERMS])
_TET_PAIRS = [(a, b) for a in range(4) for b in range(a + 1, 4)]
_PAIR_INDEX = {p: i for i, p in enumerate(_TET_PAIRS)}


def _case_table():
    """Triangles (as tet-edge triples) for each above/below pattern of a tet."""
    table = {}
    for mask in range(16):
        up = [i for i in range(4) if mask >> i & 1]
        lo = [i for i in range(4) if not mask >> i & 1]
        if len(up) in (0, 4):
            table[mask] = []
        elif len(up) == 1 or len(lo) == 1:
            lone, rest = (up[0], lo) if len(up) == 1 else (lo[0], up)
            table[mask] = [[_PAIR_INDEX[tuple(sorted((lone, r)))] for r in rest]]
        else:
            (l1, l2), (u1, u2) = lo, up
            q = [_PAIR_INDEX[tuple(sorted(p))] for p in ((l1, u1), (l1, u2), (l2, u2), (l2, u1))]
            table[mask] = [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
    return table


_CASES = _case_table()


def _refine_on_edges(field: TrigField, c: float, p0: np.ndarray, d: np.ndarray,
                     f0: np.ndarray, f1: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Parameter t in [0,1] with field(p0 + t d) = c, by bracketed Newton."""
    lo = np.zeros(len(p0))
    hi = np.ones(len(p0))
    flo = f0.copy()
    t = np.clip(f0 / (f0 - f1), 0.0, 1.0)
    for _ in range(60):
        p = p0 + t[:, None] * d
        g = field.value(p) - c
        dg = np.einsum("ij,ij->i", field.gradient(p), d)
        same = np.sign(g) == np.sign(flo)
        lo = np.where(same, t, lo)
        flo = np.where(same, g, flo)
        hi = np.where(same, hi, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - g / dg
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        done = np.abs(g) <= tol
        t = np.where(done, t, tn)
        if done.all():
            break
    return t


def extract_isosurface(field: TrigField, c: float, resolution: int = 64,
                       offset=(0.1234, 0.2345, 0.3456)) -> PeriodicMesh:
    """Periodic marching-tetrahedra extraction of ``field == c``.

    The unit cube is sampled at ``(i + offset) / resolution`` and every grid
    cube is split into the six tetrahedra of the Kuhn triangulation, which
    makes the case table unambiguous.  Vertices are Newton-refined onto the
    level along their grid edge.

    Args:
        field: Three-dimensional periodic field.
        c: Level value.
        resolution: Grid points per unit length.
        offset: Grid offset in cell units; a generic value keeps nodes off
            symmetric points where the field may equal ``c`` exactly.

    Returns:
        The mesh, empty when ``c`` lies outside the sampled range.

    Warns:
        NearCriticalWarning: If the gradient on the surface gets small
            compared with the cell size.
    """
    if field.dimension != 3:
        raise MeshError("isosurface extraction needs a three-dimensional field")
    N = int(resolution)
    if N < 2:
        raise MeshError("resolution must be at least 2")
    off = np.asarray(offset, dtype=float)
    axes = [(np.arange(N) + off[i]) / N for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    vals = field.value(grid) - c
    above = vals > 0
    empty = PeriodicMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3, 3), dtype=np.int64))
    if above.all() or not above.any():
        return empty
    corners = np.array(list(itertools.product((0, 1), repeat=3)))
    cb = np.stack([np.roll(above, tuple(-corners[k]), axis=(0, 1, 2)) for k in range(8)], -1)
    active = np.nonzero(cb.any(-1) & ~cb.all(-1))
    cubes = np.column_stack(active).astype(np.int64)
    tri_cube, tri_tet, tri_edges = [], [], []
    for t in range(6):
        nodes = (cubes[:, None, :] + _TET[t][None]) % N
        bits = above[nodes[..., 0], nodes[..., 1], nodes[..., 2]]
        mask = bits @ (1 << np.arange(4))
        for m in range(1, 15):
            sel = np.nonzero(mask == m)[0]
            if not len(sel):
                continue
            for tri in _CASES[m]:
                tri_cube.append(sel)
                tri_tet.append(np.full(len(sel), t))
                tri_edges.append(np.broadcast_to(np.array(tri), (len(sel), 3)))
    tri_cube = np.concatenate(tri_cube)
    tri_tet = np.concatenate(tri_tet)
    tri_edges = np.concatenate(tri_edges)
    # global edge key = node index * 7 + direction index
    pa = np.array([p[0] for p in _TET_PAIRS])
    pb = np.array([p[1] for p in _TET_PAIRS])
    base_off = _TET[tri_tet[:, None], pa[tri_edges]]           # (T, 3, 3)
    dirs = _TET[tri_tet[:, None], pb[tri_edges]] - base_off     # (T, 3, 3)
    cube_xyz = cubes[tri_cube]
    base = cube_xyz[:, None, :] + base_off
    node = base % N
    dir_idx = dirs @ np.array([4, 2, 1]) - 1
    key = ((node[..., 0] * N + node[..., 1]) * N + node[..., 2]) * 7 + dir_idx
    ukey, vid = np.unique(key.reshape(-1), return_inverse=True)
    vid = vid.reshape(-1, 3)
    # vertex parameters along their edges
    unode = ukey // 7
    udir_idx = ukey % 7 + 1
    udir = np.column_stack([(udir_idx >> 2) & 1, (udir_idx >> 1) & 1, udir_idx & 1])
    uxyz = np.column_stack([unode // (N * N), (unode // N) % N, unode % N])
    oxyz = (uxyz + udir) % N
    f0 = vals[uxyz[:, 0], uxyz[:, 1], uxyz[:, 2]]
    f1 = vals[oxyz[:, 0], oxyz[:, 1], oxyz[:, 2]]
    p0 = (uxyz + off) / N
    t = _refine_on_edges(field, c, p0, udir / N, f0, f1)
    pos = p0 + t[:, None] * udir / N
    P = pos - np.floor(pos)
    P[P >= 1.0] = 0.0
    lifted = (base + off + t[vid][..., None] * dirs) / N
    m = np.rint(lifted - P[vid]).astype(np.int64)
    q = P[vid] + m
    # orient every triangle so that its normal points towards larger values;
    # quads are split from a cyclic order, so both halves flip together
    normal = np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0])
    tet_corners = _TET[tri_tet]
    nodes = (cube_xyz[:, None, :] + tet_corners) % N
    up = above[nodes[..., 0], nodes[..., 1], nodes[..., 2]]
    nup = up.sum(1, keepdims=True)
    updir = ((tet_corners * up[..., None]).sum(1) / nup
             - (tet_corners * ~up[..., None]).sum(1) / (4 - nup))
    flip = np.einsum("ij,ij->i", normal, updir) < 0
    vid[flip] = vid[flip][:, [0, 2, 1]]
    m[flip] = m[flip][:, [0, 2, 1]]
    wraps = np.roll(m, -1, axis=1) - m
    mesh = PeriodicMesh(P, vid, wraps)
    gmin = float(np.linalg.norm(field.gradient(P), axis=1).min())
    hess = float((np.abs(field.amps) * (2 * np.pi * np.linalg.norm(field.freqs, axis=1)) ** 2).sum())
    if gmin < 0.5 * hess * np.sqrt(3) / N:
        warnings.warn(f"level {c} is within about one cell of a critical point "
                      f"(min |grad| on surface {gmin:.3g})", NearCriticalWarning, stacklevel=2)
    return mesh


def stable_topology(field: TrigField, c: float, start: int = 16, max_resolution: int = 128,
                    **kwargs) -> tuple[SurfaceTopology, int]:
    """Double the resolution until genus and rank agree on two consecutive doublings.

    Returns:
        The stable topology and the finest resolution used.
    """
    history = []
    res = start
    while res <= max_resolution:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearCriticalWarning)
            topo = extract_isosurface(field, c, res, **kwargs).topology()
        history.append((topo.genera, tuple(ct.rank for ct in topo.components), topo.rank))
        if len(history) >= 3 and history[-1] == history[-2] == history[-3]:
            return topo, res
        res *= 2
    raise MeshError(f"topology did not stabilize up to resolution {max_resolution}: {history}")


# ---------------------------------------------------------------------- exact meshes
def mesh_from_lifted(lifted: np.ndarray, denominator: int) -> PeriodicMesh:
    """Exact mesh from triangles given in integer units of ``1/denominator``.

    Args:
        lifted: Integer corner coordinates of each triangle in a continuous
            lift, shape (F, 3, 3).
        denominator: Common denominator of all coordinates.
    """
    lifted = np.asarray(lifted, dtype=np.int64)
    wrapped = lifted % denominator
    m = (lifted - wrapped) // denominator
    keys, vid = np.unique(wrapped.reshape(-1, 3), axis=0, return_inverse=True)
    vid = vid.reshape(-1, 3)
    exact = tuple(tuple(Fraction(int(x), denominator) for x in k) for k in keys)
    wraps = np.roll(m, -1, axis=1) - m
    return PeriodicMesh(keys / denominator, vid, wraps, exact)


def mu_cube_mesh(scales=None) -> PeriodicMesh:
    """Exact triangulated mu-cube (regular skew polyhedron with 6 squares per vertex).

    With ``scales = (a, b, c)`` (rationals in (0, 1)) the inner cube edges
    along x, y, z become a, b, c instead of 1/2, giving a mu-parallelepiped.

    Half-size cubes with index (i, j, k) mod 2 are split into two congruent
    labyrinths: cubes with at most one odd index, and the rest, which is the
    first set shifted by (1/2, 1/2, 1/2).  The surface is the set of squares
    between them, oriented towards the second labyrinth.  Coordinates are in
    units of 1/2.
    """
    inner = [c for c in itertools.product((0, 1), repeat=3) if sum(c) <= 1]
    tris = []
    for cube in inner:
        cube = np.array(cube)
        for axis in range(3):
            for side in (0, 1):
                nb = cube.copy()
                nb[axis] += 1 if side else -1
                if int(np.sum(nb % 2)) <= 1:
                    continue  # neighbor is in the same labyrinth
                a, b = [x for x in range(3) if x != axis]
                corner = cube.copy()
                corner[axis] += side
                sq = []
                for da, db in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = corner.copy()
                    p[a] += da
                    p[b] += db
                    sq.append(p)
                sq = np.array(sq)
                normal = np.cross(sq[1] - sq[0], sq[2] - sq[0])
                outward = np.zeros(3, dtype=np.int64)
                outward[axis] = 1 if side else -1
                if normal @ outward < 0:
                    sq = sq[[0, 3, 2, 1]]
                tris.append(sq[[0, 1, 2]])
                tris.append(sq[[0, 2, 3]])
    tris = np.array(tris)
    if scales is None:
        return mesh_from_lifted(tris, 2)
    fr = [Fraction(x).limit_denominator(10**6) for x in scales]
    if not all(0 < x < 1 for x in fr):
        raise MeshError("parallelepiped scales must lie in (0, 1)")
    den = math.lcm(*(x.denominator for x in fr))
    step = np.array([int(x * den) for x in fr], dtype=np.int64)
    return mesh_from_lifted((tris // 2) * den + (tris % 2) * step, den)


# ---------------------------------------------------------------------- file format
def _fmt_coord(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(float(x))


def save_mesh(mesh: PeriodicMesh, path) -> None:
    """Write ``mesh`` in the text pmesh format."""
    lines = [f"pmesh {mesh.n_vertices} {mesh.n_faces}" + (" exact" if mesh.exact else "")]
    verts = mesh.exact_vertices if mesh.exact else mesh.vertices
    for p in verts:
        lines.append(" ".join(_fmt_coord(x) for x in p))
    for f, w in zip(mesh.faces, mesh.wraps):
        lines.append(" ".join(str(int(i)) for i in f) + "  " + "  ".join(" ".join(str(int(x)) for x in r) for r in w))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> PeriodicMesh:
    """Read and validate a pmesh file.

    Raises:
        MeshError: On malformed content or violated invariants.
    """
    rows = [ln.split() for ln in Path(path).read_text().splitlines()]
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows or rows[0][0] != "pmesh" or len(rows[0]) not in (3, 4):
        raise MeshError("missing 'pmesh <V> <F> [exact]' header")
    try:
        nv, nf = int(rows[0][1]), int(rows[0][2])
    except ValueError as exc:
        raise MeshError(f"bad header counts: {exc}") from exc
    exact = len(rows[0]) == 4
    if exact and rows[0][3] != "exact":
        raise MeshError(f"unknown header flag {rows[0][3]!r}")
    if len(rows) != 1 + nv + nf:
        raise MeshError(f"expected {nv} vertex and {nf} face lines, found {len(rows) - 1} lines")
    try:
        fr = [tuple(Fraction(x) for x in r) for r in rows[1:1 + nv]]
        if any(len(p) != 3 for p in fr):
            raise MeshError("vertex lines need three coordinates")
        fl = [[int(x) for x in r] for r in rows[1 + nv:]]
    except (ValueError, ZeroDivisionError) as exc:
        raise MeshError(f"malformed number: {exc}") from exc
    if any(len(r) != 12 for r in fl):
        raise MeshError("face lines need 3 indices and 3 wrap vectors")
    fl = np.array(fl, dtype=np.int64).reshape(-1, 12)
    verts = np.array([[float(x) for x in p] for p in fr]).reshape(-1, 3)
    mesh = PeriodicMesh(verts, fl[:, :3], fl[:, 3:].reshape(-1, 3, 3), tuple(fr) if exact else None)
    mesh.validate()
    return mesh
