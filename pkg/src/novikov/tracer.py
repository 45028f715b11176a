"""Plane sections of level surfaces: critical points, tracing, classification.

A B-section is the intersection of a level surface with a plane
<B, x> = s.  On an analytic level it is traced as the flow of grad x B with
a projection back onto both constraints after every step; on a mesh it is
followed as a chain of plane-triangle crossings.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .fields import TrigField
from .intmath import primitive, sign_normalize, unimodular_frame
from .mesh import PeriodicMesh, extract_isosurface, mu_cube_mesh


class TraceError(RuntimeError):
    """A trace could not be started or its corrector diverged."""


TRIBONACCI = 1.8392867552141612  # real root of a^3 = a^2 + a + 1


# ---------------------------------------------------------------------- data types
@dataclass(frozen=True)
class Direction:
    """Magnetic-field direction, a point of the projective plane.

    Attributes:
        vector: Sign-normalized float representative.
        integer: Indivisible integer representative for rational directions.
    """

    vector: np.ndarray
    integer: tuple[int, int, int] | None = None

    @classmethod
    def of(cls, v) -> "Direction":
        """Build from an integer triple (made indivisible) or a real vector."""
        if isinstance(v, Direction):
            return v
        if all(isinstance(x, (int, np.integer)) for x in v):
            iv = primitive([int(x) for x in v])
            return cls(np.array(iv, dtype=float), iv)
        arr = np.asarray(v, dtype=float)
        if not np.any(arr):
            raise ValueError("direction must be nonzero")
        return cls(np.array(sign_normalize(list(arr)), dtype=float), None)

    @property
    def rational(self) -> bool:
        return self.integer is not None

    @property
    def unit(self) -> np.ndarray:
        return self.vector / np.linalg.norm(self.vector)

    def __str__(self) -> str:
        if self.integer is not None:
            return ",".join(str(x) for x in self.integer)
        return ",".join(f"{x:.17g}" for x in self.vector)


def tribonacci_direction() -> Direction:
    """The chaotic mu-cube direction [a^2 - a - 1 : a - 1 : 1], a the Tribonacci constant."""
    a = TRIBONACCI
    return Direction.of([a * a - a - 1, a - 1, 1.0])


@dataclass(frozen=True)
class LevelSurface:
    """The level set ``field == c`` of a periodic field."""

    field: TrigField
    c: float


@dataclass
class Trajectory:
    """A traced B-section lifted to Euclidean space.

    Attributes:
        points: Lift of the section, shape (n, 3).
        direction: Field direction B.
        offset: Plane offset s = <B, p>.
        status: ``"closed"``, ``"open"`` (budget used up) or ``"diverged"``.
        translation: Integer displacement between start and return point when closed.
        length: Arc length traced.
        budget: Arc-length budget.
        singular_adjacent: True when the trace passed near a critical point.
        min_singular_distance: Smallest estimated distance to a critical point.
        exact_points: Rational lift points for exact traces.
    """

    points: np.ndarray
    direction: Direction
    offset: float
    status: str
    translation: tuple[int, int, int] | None
    length: float
    budget: float
    singular_adjacent: bool = False
    min_singular_distance: float = math.inf
    exact_points: list | None = None

    @property
    def closed(self) -> bool:
        return self.status == "closed"

    def arc_lengths(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])


@dataclass(frozen=True)
class CriticalPoint:
    """Point of the level where the plane orthogonal to B is tangent."""

    location: np.ndarray
    offset: float
    kind: str  # "saddle", "extremum" or "degenerate"
    curvature_det: float


@dataclass(frozen=True)
class Classification:
    """Outcome of :func:`classify`.

    ``kind`` is one of Trivial, ClosedNonZero, OpenAsymptotic,
    ChaoticCandidate, Undetermined.
    """

    kind: str
    translation: tuple[int, int, int] | None = None
    direction: np.ndarray | None = None
    radius: float | None = None
    exponent: float | None = None
    note: str = ""


# ---------------------------------------------------------------------- critical points
def _tangent_basis(B: np.ndarray) -> np.ndarray:
    b = B / np.linalg.norm(B)
    a = np.eye(3)[np.argmin(np.abs(b))]
    u = np.cross(b, a)
    u /= np.linalg.norm(u)
    return np.array([u, np.cross(b, u)])


def find_critical_points(field: TrigField, c: float, B, seed_resolution: int = 24,
                         dedup: float = 1e-6, degenerate_tol: float = 1e-8) -> list[CriticalPoint]:
    """Tangency points of planes orthogonal to B with the level ``field == c``.

    Solves grad = mu B, field = c by batch Newton in (x, mu) from seeds taken
    on a coarse mesh of the level where the normal is close to +-B.

    Returns:
        Points in [0,1)^3 sorted by offset, deduplicated modulo the lattice.
    """
    Bv = Direction.of(B).vector if not isinstance(B, np.ndarray) else np.asarray(B, dtype=float)
    mesh = extract_isosurface(field, c, seed_resolution)
    if mesh.is_empty():
        return []
    P = mesh.vertices
    g = field.gradient(P)
    align = np.abs(g @ Bv) / (np.linalg.norm(g, axis=1) * np.linalg.norm(Bv))
    x = P[align > 0.7].copy()
    if len(x) > 4000:
        x = x[np.argsort(-align[align > 0.7], kind="stable")[:4000]]
    mu = (field.gradient(x) @ Bv) / (Bv @ Bv)
    for _ in range(40):
        gx = field.gradient(x)
        H = field.hessian(x)
        r = np.concatenate([gx - mu[:, None] * Bv, (field.value(x) - c)[:, None]], axis=1)
        J = np.zeros((len(x), 4, 4))
        J[:, :3, :3] = H
        J[:, :3, 3] = -Bv
        J[:, 3, :3] = gx
        try:
            d = np.linalg.solve(J, r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J.reshape(-1, 4), r.reshape(-1), rcond=None)[0].reshape(-1, 4)
        d = np.clip(d, -0.05, 0.05)
        x = x - d[:, :3]
        mu = mu - d[:, 3]
    gx = field.gradient(x)
    res = np.linalg.norm(gx - mu[:, None] * Bv, axis=1) + np.abs(field.value(x) - c)
    ok = np.isfinite(res) & (res < 1e-10)
    x = x[ok] - np.floor(x[ok])
    found: list[np.ndarray] = []
    for p in x:
        if all(np.linalg.norm((p - q + 0.5) % 1.0 - 0.5) > dedup for q in found):
            found.append(p)
    T = _tangent_basis(Bv)
    out = []
    for p in found:
        Hr = T @ field.hessian(p) @ T.T
        det = float(np.linalg.det(Hr))
        scale = float(np.linalg.norm(field.hessian(p))) ** 2 + 1e-300
        kind = "degenerate" if abs(det) < degenerate_tol * scale else ("saddle" if det < 0 else "extremum")
        out.append(CriticalPoint(p, float((p @ Bv)), kind, det))
    out.sort(key=lambda cp: (cp.offset % 1.0 if Direction.of(B).rational else cp.offset, tuple(cp.location)))
    return out


# ---------------------------------------------------------------------- seeding
def section_seeds(field: TrigField, c: float, B, s: float, count: int = 4,
                  resolution: int = 256, rng: np.random.Generator | None = None) -> np.ndarray:
    """Points on ``field == c`` with <B, x> = s, found on lines inside the plane.

    For rational B the plane is sampled over one period of its lattice, so
    every closed section component is reachable.

    Returns:
        Up to ``count`` seed points, shape (k, 3).
    """
    d = Direction.of(B)
    Bv = d.vector
    if d.rational:
        l1, l2, m = unimodular_frame(d.integer)
        base = s * np.array(m, dtype=float)
        u, v = np.array(l1, dtype=float), np.array(l2, dtype=float)
    else:
        u, v = _tangent_basis(Bv)
        base = s * Bv / (Bv @ Bv)
        u, v = u * 3.0, v * 3.0
    rng = rng or np.random.default_rng(0)
    ga = np.arange(resolution) / resolution
    out = []
    rows = rng.permutation(resolution)
    for r in rows:
        b = (r + 0.5) / resolution
        pts = base + ga[:, None] * u + b * v
        f = field.value(pts) - c
        sc = np.nonzero(np.sign(f) != np.sign(np.roll(f, -1)))[0]
        for i in sc:
            lo, hi = ga[i], ga[i] + 1.0 / resolution
            flo = f[i]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                fm = field.value(base + mid * u + b * v) - c
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            out.append(base + 0.5 * (lo + hi) * u + b * v)
            if len(out) >= count:
                return np.array(out)
    return np.array(out).reshape(-1, 3)


# ---------------------------------------------------------------------- tracing
def _field_arrays(f: TrigField):
    return (np.ascontiguousarray(f.freqs, dtype=float), np.ascontiguousarray(f.amps),
            np.ascontiguousarray(f.phases))


def trace_field_section(surface: LevelSurface, B, s: float, seed, budget: float = 100.0, *,
                        h0: float = 1e-3, hmax: float = 0.02, angle: float = 0.02,
                        close_tol: float = 1e-6, singular_tol: float = 1e-5,
                        store_every: int = 1, max_store: int = 2_000_000) -> Trajectory:
    """Trace the section of an analytic level through ``seed``.

    Args:
        surface: Level surface.
        B: Direction (integer triple or real vector).
        s: Plane offset.
        seed: Start point; projected onto the section first.
        budget: Arc-length budget.
        h0: Initial step.
        hmax: Largest step.
        angle: Target turning of the tangent per step (radians).
        close_tol: Distance to the translated start accepted as closure.
        singular_tol: Estimated distance to a critical point that flags the trace.
        store_every: Keep one point in this many steps.
        max_store: Capacity of the stored polyline.

    Raises:
        TraceError: If the seed cannot be projected or the corrector diverges.
    """
    d = Direction.of(B)
    fr, am, ph = _field_arrays(surface.field)
    pts, n, status, trans, length, msd = _kernels.trace_field_kernel(
        fr, am, ph, float(surface.c), d.vector.copy(), float(s), np.asarray(seed, dtype=float).copy(),
        float(budget), h0, hmax, angle, close_tol, singular_tol, int(store_every), int(max_store))
    if status == _kernels.DIVERGED and n == 0:
        raise TraceError(f"seed {seed} does not project onto the section B={d} s={s}")
    st = {_kernels.OPEN: "open", _kernels.CLOSED: "closed", _kernels.DIVERGED: "diverged"}[status]
    tr = tuple(int(x) for x in trans) if st == "closed" else None
    return Trajectory(pts[:n].copy(), d, float(s), st, tr, float(length), float(budget),
                      bool(msd < singular_tol), float(msd))


@dataclass(frozen=True)
class _MeshWalk:
    lifted: np.ndarray
    nbr: np.ndarray
    nbr_side: np.ndarray
    shift: np.ndarray


_WALK_CACHE: dict[int, tuple[PeriodicMesh, _MeshWalk]] = {}


def mesh_walk_data(mesh: PeriodicMesh) -> _MeshWalk:
    """Adjacency and frame shifts used by the mesh tracers (cached per mesh)."""
    hit = _WALK_CACHE.get(id(mesh))
    if hit is not None and hit[0] is mesh:
        return hit[1]
    nbr, nside = mesh.face_adjacency
    m = mesh.corner_offsets
    i = np.arange(3)
    # the shared vertex at the start of side i is corner (j + 1) of the neighbor
    shift = m[:, i, :] - m[nbr, (nside + 1) % 3, :]
    walk = _MeshWalk(np.ascontiguousarray(mesh.lifted_faces), nbr, nside, shift.astype(float))
    _WALK_CACHE[id(mesh)] = (mesh, walk)
    return walk


def crossing_faces(mesh: PeriodicMesh, B, s: float) -> np.ndarray:
    """Faces whose own lift meets the plane <B, x> = s."""
    h = mesh.heights(Direction.of(B).vector) - s
    pos = h > 0
    return np.nonzero(pos.any(1) & ~pos.all(1))[0]


def _start_face(mesh: PeriodicMesh, B: np.ndarray, s: float) -> tuple[int, np.ndarray]:
    """A face meeting the plane <B, x> = s in some lattice translate of its lift."""
    h = mesh.heights(B)
    mid = 0.5 * (h.min() + h.max())
    cands = np.array(list(itertools.product(range(-3, 4), repeat=3)), dtype=float)
    for n in cands[np.argsort(np.abs(s - cands @ B - mid), kind="stable")][:16]:
        faces = crossing_faces(mesh, B, s - float(n @ B))
        if len(faces):
            return int(faces[0]), n
    raise TraceError(f"no face of the mesh meets the plane B={B} s={s}")


def trace_mesh_section(mesh: PeriodicMesh, B, s: float, face: int | None = None, budget: float = 100.0,
                       *, max_steps: int = 50_000_000, store_every: int = 1,
                       max_store: int = 5_000_000) -> Trajectory:
    """Follow the section of a mesh through plane-triangle crossings (float arithmetic)."""
    d = Direction.of(B)
    frame = np.zeros(3)
    if face is None:
        face, frame = _start_face(mesh, d.vector, s)
    w = mesh_walk_data(mesh)
    pts, n, status, trans, length, steps = _kernels.trace_mesh_kernel(
        w.lifted, w.nbr, w.nbr_side, w.shift, d.vector.copy(), float(s), int(face), frame,
        float(budget), int(max_steps), int(store_every), int(max_store))
    if status == _kernels.DIVERGED:
        raise TraceError(f"face {face} does not meet the plane B={d} s={s}")
    st = "closed" if status == _kernels.CLOSED else "open"
    tr = tuple(int(round(x)) for x in trans) if st == "closed" else None
    return Trajectory(pts[:n].copy(), d, float(s), st, tr, float(length), float(budget))


def trace_exact_section(mesh: PeriodicMesh, B: Sequence[int], s, face: int | None = None,
                        max_steps: int = 1_000_000) -> Trajectory:
    """Exact rational walk of the section of an exact mesh.

    The plane must avoid the mesh vertices; a vertex on the plane raises.

    Raises:
        TraceError: For a non-exact mesh, an irrational direction, a plane
            through a vertex, or a step budget that runs out.
    """
    if not mesh.exact:
        raise TraceError("exact tracing needs an exact mesh")
    d = Direction.of(tuple(int(x) for x in B))
    Bi = d.integer
    s = Fraction(s)
    verts = mesh.exact_vertices
    hv = [sum(Fraction(b) * x for b, x in zip(Bi, p)) for p in verts]
    m = mesh.corner_offsets
    faces = mesh.faces
    nbr, nside = mesh.face_adjacency
    # corner heights in each face lift: vertex height + <B, offset>
    moff = (m @ np.array(Bi)).tolist()

    def heights(f, frame_h):
        return [hv[faces[f][k]] + moff[f][k] + frame_h - s for k in range(3)]

    def exit_of(hh, skip=-1):
        for k in range(3):
            if k != skip and hh[k] > 0 and hh[(k + 1) % 3] < 0:
                return k
        return -1

    # B is indivisible, so some lattice translate of a vertex lies on the plane
    # exactly when s minus the vertex height is an integer
    if any((s - h).denominator == 1 for h in hv):
        raise TraceError(f"plane B={d} s={s} passes through a vertex; perturb s")
    frame = [0, 0, 0]
    if face is None:
        _, n = _start_face(mesh, np.array(Bi, dtype=float), float(s))
        frame = [int(x) for x in n]
        fh0 = sum(b_ * x for b_, x in zip(Bi, frame))
        face = next((f for f in range(mesh.n_faces)
                     if min(heights(f, fh0)) < 0 < max(heights(f, fh0))), None)
        if face is None:
            raise TraceError(f"no face meets the plane B={d} s={s}")
    hh = heights(face, sum(b_ * x for b_, x in zip(Bi, frame)))
    if any(h == 0 for h in hh):
        raise TraceError(f"plane B={d} s={s} passes through a vertex; perturb s")
    side = exit_of(hh)
    f, f0, side0, frame0 = face, face, side, list(frame)
    pts = []
    for step in range(max_steps):
        i, j = side, (side + 1) % 3
        t = hh[i] / (hh[i] - hh[j])
        a = [verts[faces[f][i]][k] + int(m[f][i][k]) + frame[k] for k in range(3)]
        b = [verts[faces[f][j]][k] + int(m[f][j][k]) + frame[k] for k in range(3)]
        pts.append(tuple(a[k] + t * (b[k] - a[k]) for k in range(3)))
        n = tuple(frame[k] - frame0[k] for k in range(3))
        if step > 0 and f == f0 and i == side0 and sum(b_ * x for b_, x in zip(Bi, n)) == 0:
            fl = np.array([[float(x) for x in p] for p in pts])
            seg = np.linalg.norm(np.diff(fl, axis=0), axis=1).sum()
            return Trajectory(fl, d, float(s), "closed", n, float(seg), math.inf, exact_points=pts)
        g, gs = int(nbr[f][i]), int(nside[f][i])
        frame = [frame[k] + int(m[f][i][k]) - int(m[g][(gs + 1) % 3][k]) for k in range(3)]
        f = g
        fh = sum(b_ * x for b_, x in zip(Bi, frame))
        hh = heights(f, fh)
        if any(h == 0 for h in hh):
            raise TraceError(f"plane B={d} s={s} passes through a vertex; perturb s")
        side = exit_of(hh, gs)
    fl = np.array([[float(x) for x in p] for p in pts])
    return Trajectory(fl, d, float(s), "open", None, float(np.linalg.norm(np.diff(fl, axis=0), axis=1).sum()),
                      math.inf, exact_points=pts)


def exact_trace_mu_cube(B: Sequence[int], s, face: int | None = None,
                        max_steps: int = 1_000_000) -> Trajectory:
    """Exact section of the mu-cube for an integer direction and rational offset."""
    return trace_exact_section(_mu_cube(), B, s, face, max_steps)


_MU = []


def _mu_cube() -> PeriodicMesh:
    if not _MU:
        _MU.append(mu_cube_mesh())
    return _MU[0]


def trace_section(surface, B, s: float, seed=None, budget: float = 100.0, **kwargs) -> Trajectory:
    """Trace a section of an analytic level (:class:`LevelSurface`) or of a mesh.

    For analytic levels ``seed`` is a start point (found automatically when
    None); for meshes it is a face index.
    """
    if isinstance(surface, PeriodicMesh):
        return trace_mesh_section(surface, B, s, seed, budget, **kwargs)
    if not isinstance(surface, LevelSurface):
        raise TypeError("surface must be a LevelSurface or a PeriodicMesh")
    if seed is None:
        seeds = section_seeds(surface.field, surface.c, B, s, count=1)
        if not len(seeds):
            raise TraceError(f"the plane B={B} s={s} misses the level")
        seed = seeds[0]
    return trace_field_section(surface, B, s, seed, budget, **kwargs)


# ---------------------------------------------------------------------- classification
def fit_line(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Direction of the displacement line through the first point and the deviation radius.

    The direction is the dominant singular vector of the displacements, oriented
    along the net displacement; the radius is the largest distance of any point
    from the line through the start with that direction.
    """
    d = points - points[0]
    if len(d) < 2 or not np.any(d):
        return np.zeros(3), 0.0
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    u = vt[0]
    if u @ d[-1] < 0:
        u = -u
    perp = d - np.outer(d @ u, u)
    return u, float(np.linalg.norm(perp, axis=1).max())


def deviation_profile(traj: Trajectory, n_samples: int = 24, min_length: float | None = None):
    """Deviation from the final fitted line as a function of arc length.

    Returns:
        (arc lengths, deviations) on a logarithmic grid of prefix lengths.
    """
    s = traj.arc_lengths()
    total = s[-1]
    lo = min_length if min_length is not None else max(total / 1e3, s[min(len(s) - 1, 10)])
    grid = np.geomspace(lo, total, n_samples)
    u, _ = fit_line(traj.points)
    d = traj.points - traj.points[0]
    perp = np.linalg.norm(d - np.outer(d @ u, u), axis=1)
    runmax = np.maximum.accumulate(perp)
    idx = np.searchsorted(s, grid, side="right") - 1
    return grid, runmax[np.clip(idx, 0, len(runmax) - 1)]


def displacement_profile(traj: Trajectory, n_samples: int = 24, min_length: float | None = None):
    """Largest distance from the start reached within each prefix length."""
    s = traj.arc_lengths()
    total = s[-1]
    lo = min_length if min_length is not None else max(total / 1e3, s[min(len(s) - 1, 10)])
    grid = np.geomspace(lo, total, n_samples)
    r = np.maximum.accumulate(np.linalg.norm(traj.points - traj.points[0], axis=1))
    idx = np.searchsorted(s, grid, side="right") - 1
    return grid, r[np.clip(idx, 0, len(r) - 1)]


def classify(traj: Trajectory, retrace: Callable[[float], Trajectory] | None = None,
             doublings: int = 2, growth_tol: float = 1.5) -> Classification:
    """Classify a traced section.

    Args:
        traj: The trace.
        retrace: Callable returning the same section traced with a given
            budget; used to double the budget for open traces.
        doublings: Number of budget doublings for open traces.
        growth_tol: Largest accepted growth factor of the deviation radius
            over all doublings for an asymptotic verdict.
    """
    if traj.closed:
        n = traj.translation
        return Classification("Trivial" if not any(n) else "ClosedNonZero", translation=n)
    if traj.status != "open":
        return Classification("Undetermined", note="corrector diverged")
    u, r0 = fit_line(traj.points)
    radii = [r0]
    last = traj
    if retrace is not None:
        for k in range(1, doublings + 1):
            last = retrace(traj.budget * 2 ** k)
            if last.closed:
                return classify(last)
            u, rk = fit_line(last.points)
            radii.append(rk)
    scale = max(radii[0], 1e-9)
    if retrace is not None and max(radii) <= growth_tol * scale + 1e-6:
        return Classification("OpenAsymptotic", direction=u, radius=max(radii))
    grid, dev = deviation_profile(last)
    ok = dev > 0
    expo = float(np.polyfit(np.log(grid[ok]), np.log(dev[ok]), 1)[0]) if ok.sum() >= 3 else float("nan")
    note = "" if retrace is not None else "no budget follow-up; inconclusive"
    kind = "ChaoticCandidate" if retrace is not None else "Undetermined"
    return Classification(kind, direction=u, radius=max(radii), exponent=expo, note=note)


@dataclass(frozen=True)
class ExponentEstimate:
    value: float
    interval: tuple[float, float]
    decades: float


def diffusion_exponent(trajectories: Sequence[Trajectory], n_samples: int = 24,
                       n_boot: int = 200, seed: int = 0, min_length: float | None = None,
                       measure: str = "displacement") -> ExponentEstimate:
    """Power-law growth exponent of a family of open traces.

    Fits log(displacement) against log(arc length) over the pooled family,
    with a bootstrap interval over trajectories; the displacement is the
    largest distance from the start reached so far.  ``measure="deviation"``
    fits the distance from the fitted line instead.

    Raises:
        ValueError: With fewer than 8 open traces or under two decades of lengths.
    """
    open_ = [t for t in trajectories if not t.closed]
    if len(open_) < 8:
        raise ValueError("need at least 8 open trajectories")
    prof = displacement_profile if measure == "displacement" else deviation_profile
    curves = [prof(t, n_samples, min_length) for t in open_]
    decades = min(np.log10(g[-1] / g[0]) for g, _ in curves)
    if decades < 2 - 1e-9:
        raise ValueError(f"arc lengths span only {decades:.2f} decades (need 2)")
    X = np.array([np.log(g) for g, _ in curves])
    Y = np.array([np.log(np.maximum(v, 1e-300)) for _, v in curves])

    def slope(idx):
        return float(np.polyfit(X[idx].ravel(), Y[idx].ravel(), 1)[0])

    est = slope(np.arange(len(open_)))
    rng = np.random.default_rng(seed)
    boots = [slope(rng.integers(0, len(open_), len(open_))) for _ in range(n_boot)]
    return ExponentEstimate(est, (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5))),
                            float(decades))
