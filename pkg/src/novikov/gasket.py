"""Recursive triangle gasket and the analytic stereographic map of the mu-cube.

A projective triangle with integer vertices e1, e2, e3 is split into the
inscribed triangle (e1+e2, e2+e3, e3+e1), which is removed, and three
corner triangles that are split again.  The vertex sums use the raw
representatives: the barycentric recursion below depends on them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
import numpy as np

from .intmath import add, cross, dot, primitive, vgcd

Vec = tuple[int, int, int]


class GasketOverflowError(OverflowError):
    """An entry no longer fits the requested fixed-width integer type."""


@dataclass(frozen=True)
class ProjTriangle:
    """Triangle in the projective plane with indivisible integer vertices."""

    e1: Vec
    e2: Vec
    e3: Vec

    def __post_init__(self):
        for v in self.vertices:
            if vgcd(v) != 1:
                raise ValueError(f"vertex {v} is not indivisible")
        for a, b in ((self.e1, self.e2), (self.e2, self.e3), (self.e3, self.e1)):
            if not any(cross(a, b)):
                raise ValueError(f"vertices {a} and {b} are proportional")

    @property
    def vertices(self) -> tuple[Vec, Vec, Vec]:
        return (self.e1, self.e2, self.e3)

    @property
    def soul(self) -> Vec:
        """Indivisible class of e1 + e2 + e3, the soul of a removed triangle."""
        return primitive(add(add(self.e1, self.e2), self.e3))

    def det(self) -> int:
        return dot(self.e1, cross(self.e2, self.e3))

    def flat(self) -> tuple[int, ...]:
        return self.e1 + self.e2 + self.e3


def subdivide(t: ProjTriangle, max_abs: int | None = None) -> tuple[list[ProjTriangle], ProjTriangle]:
    """Split ``t`` into three corner children and the removed middle triangle.

    Args:
        t: Parent triangle.
        max_abs: Optional bound on vertex entries (for fixed-width consumers).

    Raises:
        GasketOverflowError: When an entry exceeds ``max_abs``.
    """
    e1, e2, e3 = t.vertices
    s12, s23, s31 = add(e1, e2), add(e2, e3), add(e3, e1)
    if max_abs is not None and max(abs(x) for v in (s12, s23, s31) for x in v) > max_abs:
        raise GasketOverflowError(f"entries of {t} exceed {max_abs} after subdivision")
    removed = ProjTriangle(s12, s23, s31)
    children = [ProjTriangle(e1, s12, s31), ProjTriangle(s12, e2, s23), ProjTriangle(s31, s23, e3)]
    return children, removed


ROOTS: dict[str, ProjTriangle] = {
    "unit": ProjTriangle((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    # the four complementary triangles of the three squares, one per octant pair
    "T1": ProjTriangle((1, 1, 0), (0, 1, 1), (1, 0, 1)),
    "T2": ProjTriangle((-1, 1, 0), (0, 1, 1), (-1, 0, 1)),
    "T3": ProjTriangle((1, -1, 0), (0, -1, 1), (1, 0, 1)),
    "T4": ProjTriangle((1, 1, 0), (0, 1, -1), (1, 0, -1)),
}


def enumerate_gasket(root: ProjTriangle, depth: int, order: str = "depth",
                     max_abs: int | None = None) -> list[ProjTriangle]:
    """Removed triangles down to ``depth`` levels of subdivision.

    Args:
        root: Starting triangle.
        depth: Number of subdivision levels below the root (0 gives one triangle).
        order: ``"depth"`` for preorder (parent, then children left to right)
            or ``"generation"`` for level by level.
        max_abs: Optional entry bound, see :func:`subdivide`.

    Returns:
        (3^(depth+1) - 1) / 2 removed triangles.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    out: list[ProjTriangle] = []
    if order == "depth":
        stack = [(root, 0)]
        while stack:
            t, d = stack.pop()
            kids, removed = subdivide(t, max_abs)
            out.append(removed)
            if d < depth:
                stack.extend((k, d + 1) for k in reversed(kids))
        return out
    if order != "generation":
        raise ValueError(f"unknown order {order!r}")
    level = [root]
    for d in range(depth + 1):
        nxt = []
        for t in level:
            kids, removed = subdivide(t, max_abs)
            out.append(removed)
            nxt.extend(kids)
        level = nxt
    return out


def leaf_triangles(root: ProjTriangle, depth: int) -> list[ProjTriangle]:
    """The 3^depth triangles left after ``depth`` subdivisions."""
    level = [root]
    for _ in range(depth):
        level = [k for t in level for k in subdivide(t)[0]]
    return level


# ---------------------------------------------------------------------- membership
SQUARE_SOULS = {"Qx": (1, 0, 0), "Qy": (0, 1, 0), "Qz": (0, 0, 1)}


def _square_of(p) -> str | None:
    a = [abs(x) for x in p]
    for name, i in (("Qx", 0), ("Qy", 1), ("Qz", 2)):
        if a[i] >= a[(i + 1) % 3] + a[(i + 2) % 3]:
            return name
    return None


def _root_of(p) -> tuple[str, tuple]:
    """Root triangle containing ``p`` and its barycentric coordinates there."""
    x, y, z = p
    if z < 0 or (z == 0 and (y < 0 or (y == 0 and x < 0))):
        x, y, z = -x, -y, -z
    for name in ("T1", "T2", "T3", "T4"):
        e1, e2, e3 = ROOTS[name].vertices
        # solve p = a e1 + b e2 + c e3 (each root has determinant +-2)
        d = dot(e1, cross(e2, e3))
        a = Fraction(dot((x, y, z), cross(e2, e3)), d)
        b = Fraction(dot(e1, cross((x, y, z), e3)), d)
        c = Fraction(dot(e1, cross(e2, (x, y, z))), d)
        for sgn in (1, -1):
            if sgn * a > 0 and sgn * b > 0 and sgn * c > 0:
                return name, (sgn * a, sgn * b, sgn * c)
    raise ValueError(f"{p} is on the boundary of the root triangles")


@dataclass(frozen=True)
class Membership:
    """Where a direction sits in the analytic mu-cube map.

    ``region`` is a square name, ``"gasket"`` for a removed triangle (with its
    depth and soul) or ``"residual"`` when no removed triangle up to the
    depth contains it; ``"boundary"`` marks exact ties.
    """

    region: str
    soul: Vec | None = None
    depth: int | None = None
    root: str | None = None


def locate(p, depth: int) -> Membership:
    """Exact membership of a rational direction in the mu-cube map."""
    p = tuple(Fraction(x) for x in p)
    sq = _square_of(p)
    if sq is not None:
        a = [abs(x) for x in p]
        i = "xyz".index(sq[1])
        if a[i] == a[(i + 1) % 3] + a[(i + 2) % 3]:
            return Membership("boundary", SQUARE_SOULS[sq])
        return Membership(sq, SQUARE_SOULS[sq])
    try:
        root, (a, b, c) = _root_of(p)
    except ValueError:
        return Membership("boundary")
    t = ROOTS[root]
    for d in range(depth + 1):
        if a > b + c:
            t = ProjTriangle(t.e1, add(t.e1, t.e2), add(t.e1, t.e3))
            a = a - b - c
        elif b > a + c:
            t = ProjTriangle(add(t.e2, t.e1), t.e2, add(t.e2, t.e3))
            b = b - a - c
        elif c > a + b:
            t = ProjTriangle(add(t.e3, t.e1), add(t.e3, t.e2), t.e3)
            c = c - a - b
        elif a == b + c or b == a + c or c == a + b:
            return Membership("boundary", depth=d, root=root)
        else:
            return Membership("gasket", t.soul, d, root)
    return Membership("residual", depth=depth, root=root)


def gasket_depth_map(points: np.ndarray, depth: int) -> np.ndarray:
    """Vectorized float version of :func:`locate` restricted to the root triangles.

    Args:
        points: Directions, shape (n, 3).
        depth: Largest subdivision depth inspected.

    Returns:
        Depth of the removed triangle containing each point, -1 for points
        in a square or on a root boundary, ``depth + 1`` for the residual set.
    """
    p = np.asarray(points, dtype=float)
    p = np.where(((p[:, 2] < 0) | ((p[:, 2] == 0) & (p[:, 1] < 0)))[:, None], -p, p)
    out = np.full(len(p), -1, dtype=np.int64)
    todo = np.zeros(len(p), dtype=bool)
    bary = np.zeros((len(p), 3))
    for name in ("T1", "T2", "T3", "T4"):
        M = np.array(ROOTS[name].vertices, dtype=float).T
        coef = np.linalg.solve(M, p.T).T
        for sgn in (1, -1):
            inside = np.all(sgn * coef > 0, axis=1) & ~todo
            bary[inside] = sgn * coef[inside]
            todo |= inside
    a, b, c = bary.T.copy()
    alive = todo.copy()
    for d in range(depth + 1):
        ca = alive & (a > b + c)
        cb = alive & (b > a + c)
        cc = alive & (c > a + b)
        mid = alive & ~(ca | cb | cc)
        out[mid] = d
        alive &= ~mid
        a = np.where(ca, a - b - c, a)
        b = np.where(cb, b - a - c, b)
        c = np.where(cc, c - a - b, c)
    out[alive] = depth + 1
    return out


@dataclass(frozen=True)
class MuCubeMap:
    """The analytic stereographic map: three squares and four gaskets."""

    depth: int
    squares: dict
    roots: dict
    removed: dict

    def locate(self, p) -> Membership:
        return locate(p, self.depth)


def mu_cube_analytic_map(depth: int) -> MuCubeMap:
    """Squares Q_x, Q_y, Q_z and the removed triangles of every root to ``depth``."""
    qz = ((0, 1, 1), (1, 0, 1), (0, -1, 1), (-1, 0, 1))
    perm = {"Qz": (0, 1, 2), "Qx": (2, 1, 0), "Qy": (0, 2, 1)}
    squares = {k: tuple(tuple(v[i] for i in p) for v in qz) for k, p in perm.items()}
    roots = {k: ROOTS[k] for k in ("T1", "T2", "T3", "T4")}
    removed = {k: enumerate_gasket(t, depth) for k, t in roots.items()}
    return MuCubeMap(depth, squares, roots, removed)


# ---------------------------------------------------------------------- geometry
def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def spherical_area(t: ProjTriangle) -> float:
    """Area of the geodesic triangle spanned by the unit vertex directions."""
    a, b, c = (_unit(v) for v in t.vertices)
    num = abs(np.dot(a, np.cross(b, c)))
    den = 1 + a @ b + b @ c + c @ a
    return float(2 * math.atan2(num, den))


def spherical_perimeter(t: ProjTriangle) -> float:
    a, b, c = (_unit(v) for v in t.vertices)
    return float(sum(math.atan2(np.linalg.norm(np.cross(x, y)), x @ y) for x, y in ((a, b), (b, c), (c, a))))


@dataclass(frozen=True)
class ZoneStatistics:
    norms: np.ndarray
    areas: np.ndarray
    perimeters: np.ndarray
    area_exponent: float
    perimeter_exponent: float


def zone_norm_statistics(m: MuCubeMap) -> ZoneStatistics:
    """Soul norm, area and perimeter of every removed triangle, with log-log slopes."""
    if m.depth < 3:
        raise ValueError("statistics need depth >= 3")
    tris = [t for lst in m.removed.values() for t in lst]
    norms = np.array([np.linalg.norm(t.soul) for t in tris])
    areas = np.array([spherical_area(t) for t in tris])
    per = np.array([spherical_perimeter(t) for t in tris])
    la = float(np.polyfit(np.log(norms), np.log(areas), 1)[0])
    lp = float(np.polyfit(np.log(norms), np.log(per), 1)[0])
    return ZoneStatistics(norms, areas, per, la, lp)


def norm_bounds(n: int) -> tuple[float, float]:
    """Lower and upper bounds on the squared soul norm at position n of a recursive ordering."""
    from .tracer import TRIBONACCI

    x = math.log(1 + 2 * n, 3)
    return 2 * x * x + 1, 3 * (1 + 2 * n) ** (2 * math.log(TRIBONACCI, 3))


def format_triangle(t: ProjTriangle) -> str:
    return " ".join(str(x) for x in t.flat())


def gasket_residual_raster(depth: int = 8, raster: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Cells of the root triangle not removed within ``depth`` generations.

    The raster lives on the plane x + y + z = 1, where the unit-soul root
    triangle has vertices (1/2, 1/2, 0), (0, 1/2, 1/2), (1/2, 0, 1/2) and is bounded.

    Returns:
        (residual mask, inside-triangle mask), both raster x raster.
    """
    g = (np.arange(raster) + 0.5) / raster
    U, V = np.meshgrid(g, g, indexing="ij")
    W = 1.0 - U - V
    inside = (U <= 0.5) & (V <= 0.5) & (W <= 0.5) & (W >= 0)
    pts = np.column_stack([U.ravel(), V.ravel(), W.ravel()])
    d = gasket_depth_map(pts, depth).reshape(raster, raster)
    return (d == depth + 1) & inside, inside


GASKET_BOX_SIZES = (8, 16, 32, 64, 128)
