"""Souls of rational directions, energy bands, direction sweeps and zones.

The soul of an integrable direction is computed intrinsically on a mesh of
the level.  At one offset inside each gap between critical heights, every
section loop is collected.  Loops that are null in the torus but not on the
surface (cylinder waists) cut the surface homology down to the classes
with zero intersection against all of them; the torus image of that
annihilator is a rank-2 sublattice whose normal is the soul.  Translation
classes of the essential loops must lie in it.  When that normal is B
itself, or when open sections carry two independent classes (whose only
common normal is B), B is reported as its own soul.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .fields import TrigField
from .intmath import (cross, dot, independent_subset, int_rank, integer_kernel, normal_of_span, primitive,
                      sign_normalize)
from .mesh import NearCriticalWarning, PeriodicMesh, extract_isosurface
from .sections import height_data, level_loops, pl_critical_heights, sample_levels


class SoulRankError(RuntimeError):
    """The collected homology classes span all of H1 of the torus."""


@dataclass(frozen=True)
class SoulResult:
    """Outcome of :func:`compute_soul`.

    Attributes:
        status: ``"Trivial"``, ``"Soul"`` or ``"Undetermined"``.
        soul: Indivisible sign-normalized soul when status is ``"Soul"``.
        classes: Distinct essential translation classes seen (sign-normalized).
        note: Reason for an undetermined outcome.
    """

    status: str
    soul: tuple[int, int, int] | None = None
    classes: tuple[tuple[int, int, int], ...] = ()
    note: str = ""

    @property
    def label(self) -> str:
        return f"Soul{self.soul}" if self.status == "Soul" else self.status


_MESH_CACHE: dict = {}


def level_mesh(field: TrigField, c: float, resolution: int = 32) -> PeriodicMesh:
    """Cached isosurface mesh used by the soul computations."""
    key = (hash(field), float(c), int(resolution))
    m = _MESH_CACHE.get(key)
    if m is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearCriticalWarning)
            m = extract_isosurface(field, c, resolution)
        if len(_MESH_CACHE) > 16:
            _MESH_CACHE.clear()
        _MESH_CACHE[key] = m
    return m


def _levels(mesh: PeriodicMesh, B, hd):
    crit = np.mod(hd.vertex, hd.period) if hd.exact else pl_critical_heights(mesh, hd)
    return sample_levels(crit, hd.period, hd.exact)


def integer_direction(B) -> tuple[int, int, int]:
    """Indivisible integer triple of ``B``.

    Raises:
        ValueError: If an entry is not an integer or all entries vanish.
    """
    if len(B) != 3 or any(float(x) != int(x) for x in B):
        raise ValueError(f"souls need an integer direction, got {[float(x) for x in B]}")
    return primitive([int(x) for x in B])


def mesh_soul(mesh: PeriodicMesh, B: Sequence[int]) -> SoulResult:
    """Soul of the section foliation of a mesh for an integer direction.

    Raises:
        SoulRankError: If the annihilator of the cylinder waists maps onto a
            rank-3 lattice although waists were found.
    """
    B = integer_direction(B)
    if mesh.is_empty():
        return SoulResult("Trivial")
    hd = height_data(mesh, B)
    hb = mesh.homology_basis
    ncomp = mesh.n_components
    essential = [set() for _ in range(ncomp)]
    waists = [set() for _ in range(ncomp)]
    for level in _levels(mesh, B, hd):
        ll = level_loops(mesh, B, level, hd)
        for n, inter, comp in zip(ll.translations, ll.intersections, ll.component):
            if np.any(n):
                essential[comp].add(tuple(int(x) for x in n))
            elif np.any(inter):
                waists[comp].add(sign_normalize(inter.tolist()))
    all_classes = tuple(sorted({primitive(list(n)) for ess in essential for n in ess}))
    souls = set()
    for comp in range(ncomp):
        ess = essential[comp]
        if not ess and not waists[comp]:
            continue
        cols = np.nonzero(hb.component == comp)[0]
        W = hb.wraps[cols]
        rows = independent_subset([[w[c] for c in cols] for w in sorted(waists[comp])])
        if rows:
            ann = integer_kernel(rows, len(cols))
        else:
            ann = [tuple(int(i == j) for i in range(len(cols))) for j in range(len(cols))]
        image = [tuple(int(x) for x in np.asarray(a, dtype=np.int64) @ W) for a in ann]
        r = int_rank(image)
        normal = normal_of_span(image) if r == 2 else None
        centre = normal is not None and not any(cross(normal, B))
        if not ess:
            # all sections null in the torus: either trivial, or B is the soul itself
            if centre:
                souls.add(normal)
            continue
        if int_rank(list(ess)) == 2:
            # two independent open classes, both orthogonal to B: only B annihilates them
            souls.add(primitive(list(B)))
            continue
        if r == 3:
            if rows:
                raise SoulRankError(f"B={B}: annihilator of the waists has rank-3 image")
            return SoulResult("Undetermined", classes=all_classes,
                              note="no cylinder waist found; surface classes span rank 3")
        if r < 2:
            return SoulResult("Undetermined", classes=all_classes, note=f"annihilator image has rank {r}")
        bad = [n for n in ess if dot(normal, n) != 0]
        if bad:
            return SoulResult("Undetermined", classes=all_classes,
                              note=f"essential class {bad[0]} not orthogonal to {normal}")
        souls.add(normal)
    if not souls:
        return SoulResult("Trivial", classes=all_classes)
    if len(souls) > 1:
        return SoulResult("Undetermined", classes=all_classes, note=f"components disagree: {sorted(souls)}")
    return SoulResult("Soul", souls.pop(), all_classes)


def compute_soul(surface, B: Sequence[int], c: float | None = None, resolution: int = 32) -> SoulResult:
    """Trivial, Soul or Undetermined for a rational direction.

    Args:
        surface: A :class:`TrigField` (then ``c`` is required) or a :class:`PeriodicMesh`.
        B: Integer direction (made indivisible).
        c: Level of the field.
        resolution: Mesh resolution for fields.
    """
    if isinstance(surface, PeriodicMesh):
        return mesh_soul(surface, B)
    if c is None:
        raise ValueError("a level c is required for a field")
    return mesh_soul(level_mesh(surface, c, resolution), B)


# ---------------------------------------------------------------------- energy bands
@dataclass(frozen=True)
class EnergyBand:
    """Levels c with non-trivial sections: [e1, e2], empty when e1 == e2.

    ``uncertain`` lists bisection points where the predicate was undetermined.
    """

    e1: float
    e2: float
    soul: tuple[int, int, int] | None
    resolution: float
    uncertain: tuple[float, ...] = ()

    @property
    def empty(self) -> bool:
        return self.e1 >= self.e2


class SoulInconsistencyError(RuntimeError):
    """Souls sampled inside one band differ."""


def energy_band(field: TrigField, B: Sequence[int], resolution: float = 1e-3, mesh_resolution: int = 32,
                scan: int = 13, interior_samples: int = 5,
                level_range: tuple[float, float] | None = None) -> EnergyBand:
    """Band of levels with non-trivial B-sections, by bisection on the level.

    A coarse scan over the field range finds a non-trivial level; each edge is
    then bisected to ``resolution``.  The soul is checked to be the same at
    ``interior_samples`` levels inside the band.  ``level_range`` restricts
    the search to a sub-interval of the field range.

    Raises:
        SoulInconsistencyError: If interior souls differ.
    """
    B = integer_direction(B)
    lo, hi = field.range_estimate() if level_range is None else (float(level_range[0]), float(level_range[1]))
    uncertain: list[float] = []

    def nontrivial(c: float) -> bool:
        r = compute_soul(field, B, c, mesh_resolution)
        if r.status == "Undetermined":
            uncertain.append(c)
        return r.status != "Trivial"

    grid = np.linspace(lo, hi, scan + 2)[1:-1]
    inside = [c for c in grid if nontrivial(float(c))]
    if not inside:
        mid = 0.5 * (lo + hi)
        return EnergyBand(mid, mid, None, resolution, tuple(uncertain))

    def bisect(a: float, b: float) -> float:
        # a non-trivial, b trivial
        while abs(b - a) > resolution:
            m = 0.5 * (a + b)
            if nontrivial(m):
                a = m
            else:
                b = m
        return 0.5 * (a + b)

    e1 = bisect(float(inside[0]), float(lo))
    e2 = bisect(float(inside[-1]), float(hi))
    souls = set()
    for c in np.linspace(e1, e2, interior_samples + 2)[1:-1]:
        r = compute_soul(field, B, float(c), mesh_resolution)
        if r.status == "Soul":
            souls.add(r.soul)
    if len(souls) > 1:
        raise SoulInconsistencyError(f"B={B}: souls {sorted(souls)} inside one band")
    return EnergyBand(e1, e2, souls.pop() if souls else None, resolution, tuple(uncertain))


# ---------------------------------------------------------------------- lattices and sweeps
CHARTS = ("x", "y", "z")


@dataclass(frozen=True)
class LatticeSample:
    chart: str
    i: int
    j: int
    direction: tuple[int, int, int]
    weight: float  # solid angle of the cell on the unit sphere


def _chart_triple(chart: str, a: int, b: int, d: int) -> tuple[int, int, int]:
    k = "xyz".index(chart)
    v = [a, b]
    v.insert(k, d)
    return tuple(v)


def chart_lattice(chart: str, n: int) -> list[LatticeSample]:
    """Rational directions of one chart or of the whole projective plane.

    ``x``/``y``/``z``: the chart with that coordinate equal to one, over
    [0, 1]^2 with points (i/n, j/n), i, j = 0..n.  ``sphere``: the three
    charts over [-1, 1]^2 with points ((2i-n)/n, (2j-n)/n), i, j = 0..n; the
    solid-angle weights of directions shared by several charts are split.
    """
    if n < 2:
        raise ValueError("lattice size must be at least 2")
    out: list[LatticeSample] = []
    if chart in CHARTS:
        h = 1.0 / n
        for i in range(n + 1):
            for j in range(n + 1):
                x, y = i / n, j / n
                w = h * h / (1 + x * x + y * y) ** 1.5
                out.append(LatticeSample(chart, i, j, primitive(_chart_triple(chart, i, j, n)), w))
        return out
    if chart != "sphere":
        raise ValueError(f"unknown chart {chart!r}")
    h = 2.0 / n
    for ch in CHARTS:
        for i in range(n + 1):
            for j in range(n + 1):
                a, b = 2 * i - n, 2 * j - n
                x, y = a / n, b / n
                w = h * h / (1 + x * x + y * y) ** 1.5
                out.append(LatticeSample(ch, i, j, primitive(_chart_triple(ch, a, b, n)), w))
    mult: dict = {}
    for s in out:
        mult[s.direction] = mult.get(s.direction, 0) + 1
    return [LatticeSample(s.chart, s.i, s.j, s.direction, s.weight / mult[s.direction]) for s in out]


@dataclass(frozen=True)
class CellOutcome:
    status: str              # Trivial, Soul, ChaoticCandidate, Undetermined, Error
    soul: tuple[int, int, int] | None = None
    note: str = ""

    @property
    def label(self) -> str:
        return f"Soul{self.soul}" if self.status == "Soul" else self.status


@dataclass
class StereographicMap:
    """Outcome per lattice sample plus everything needed to recompute a cell."""

    chart: str
    n: int
    samples: list[LatticeSample]
    outcomes: list[CellOutcome]
    provenance: dict = dc_field(default_factory=dict)

    def souls(self) -> set:
        return {o.soul for o in self.outcomes if o.status == "Soul"}

    def outcome_of(self, direction) -> CellOutcome:
        d = primitive(direction)
        for s, o in zip(self.samples, self.outcomes):
            if s.direction == d:
                return o
        raise KeyError(direction)

    def grid(self, chart: str | None = None) -> list[list[CellOutcome]]:
        """Outcomes of one chart as an (n+1) x (n+1) nested list indexed [i][j]."""
        chart = chart or (self.chart if self.chart in CHARTS else "z")
        g = [[None] * (self.n + 1) for _ in range(self.n + 1)]
        for s, o in zip(self.samples, self.outcomes):
            if s.chart == chart:
                g[s.i][s.j] = o
        return g


# surface descriptors are plain tuples so they pickle cheaply into workers
_WORKER_SURFACE = {}


def _surface_key(surface):
    if isinstance(surface, PeriodicMesh):
        return ("mesh", surface)
    field, c, res = surface
    return ("field", field, float(c), int(res))


def _init_worker(desc):
    _WORKER_SURFACE["desc"] = desc


def _outcome(desc, B) -> CellOutcome:
    try:
        if desc[0] == "mesh":
            r = mesh_soul(desc[1], B)
        else:
            r = compute_soul(desc[1], B, desc[2], desc[3])
        return CellOutcome(r.status, r.soul, r.note)
    except Exception as exc:  # per-cell errors are recorded, never fatal
        return CellOutcome("Error", None, f"{type(exc).__name__}: {exc}")


def _worker_batch(dirs):
    desc = _WORKER_SURFACE["desc"]
    return [_outcome(desc, B) for B in dirs]


def default_jobs() -> int:
    env = os.environ.get("NOVIKOV_JOBS")
    if env:
        return max(1, int(env))
    return 1


def evaluate_directions(surface, directions: Sequence[tuple[int, int, int]], jobs: int | None = None,
                        chunk: int = 64) -> list[CellOutcome]:
    """Outcome for each direction, in input order, optionally in worker processes.

    Args:
        surface: A :class:`PeriodicMesh` or a ``(field, c, resolution)`` tuple.
        directions: Integer directions.
        jobs: Worker processes; defaults to ``NOVIKOV_JOBS`` or 1.
        chunk: Directions per task.
    """
    desc = _surface_key(surface)
    jobs = jobs or default_jobs()
    dirs = list(directions)
    if jobs <= 1 or len(dirs) <= chunk:
        return [_outcome(desc, B) for B in dirs]
    batches = [dirs[k:k + chunk] for k in range(0, len(dirs), chunk)]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(desc,)) as ex:
        parts = list(ex.map(_worker_batch, batches))
    return [o for p in parts for o in p]


def sweep_chart(surface, chart: str, n: int, c: float | None = None, resolution: int = 32,
                jobs: int | None = None) -> StereographicMap:
    """Stereographic map over a chart lattice.

    Args:
        surface: A :class:`PeriodicMesh` or a :class:`TrigField` (with ``c``).
        chart: ``x``, ``y``, ``z`` or ``sphere``.
        n: Lattice size per side.
        c: Level for fields.
        resolution: Mesh resolution for fields.
        jobs: Worker processes.
    """
    samples = chart_lattice(chart, n)
    uniq = sorted({s.direction for s in samples})
    if isinstance(surface, PeriodicMesh):
        desc_surface = surface
        prov = {"surface": "mesh", "faces": surface.n_faces, "exact": surface.exact}
    else:
        if c is None:
            raise ValueError("a level c is required for a field")
        desc_surface = (surface, float(c), int(resolution))
        prov = {"surface": "field", "field": surface.to_text(), "level": float(c), "resolution": int(resolution)}
    res = evaluate_directions(desc_surface, uniq, jobs)
    table = dict(zip(uniq, res))
    prov.update({"chart": chart, "n": n, "algorithm": "waist-annihilator soul"})
    return StereographicMap(chart, n, samples, [table[s.direction] for s in samples], prov)


# ---------------------------------------------------------------------- zones
@dataclass(frozen=True)
class Zone:
    soul: tuple[int, int, int]
    directions: tuple[tuple[int, int, int], ...]
    area: float


def _adjacency(m: StereographicMap) -> dict:
    index = {}
    for s in m.samples:
        index.setdefault(s.direction, len(index))
    by_cell = {(s.chart, s.i, s.j): s.direction for s in m.samples}
    nbrs: dict = {d: set() for d in index}
    for (ch, i, j), d in by_cell.items():
        for di, dj in ((1, 0), (0, 1)):
            e = by_cell.get((ch, i + di, j + dj))
            if e is not None and e != d:
                nbrs[d].add(e)
                nbrs[e].add(d)
    return nbrs


def extract_zones(m: StereographicMap) -> list[Zone]:
    """Connected equal-soul sample sets with their solid-angle areas, largest first."""
    outcome = {}
    weight: dict = {}
    for s, o in zip(m.samples, m.outcomes):
        outcome[s.direction] = o
        weight[s.direction] = weight.get(s.direction, 0.0) + s.weight
    nbrs = _adjacency(m)
    seen = set()
    zones = []
    for d in sorted(outcome):
        o = outcome[d]
        if o.status != "Soul" or d in seen:
            continue
        comp, stack = [], [d]
        seen.add(d)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in nbrs[x]:
                if y not in seen and outcome[y].status == "Soul" and outcome[y].soul == o.soul:
                    seen.add(y)
                    stack.append(y)
        zones.append(Zone(o.soul, tuple(sorted(comp)), float(sum(weight[x] for x in comp))))
    zones.sort(key=lambda z: (-z.area, z.soul, z.directions[0]))
    return zones


def exceptional_mask(m: StereographicMap, chart: str | None = None) -> np.ndarray:
    """Cells of one chart outside zone interiors: non-soul cells and cells bordering another label."""
    g = m.grid(chart)
    lab = np.array([[o.label if o is not None else "" for o in row] for row in g], dtype=object)
    soul = np.array([[o is not None and o.status == "Soul" for o in row] for row in g])
    edge = np.zeros_like(soul)
    edge[:-1] |= lab[:-1] != lab[1:]
    edge[1:] |= lab[:-1] != lab[1:]
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[:, 1:] |= lab[:, :-1] != lab[:, 1:]
    return ~soul | edge


# ---------------------------------------------------------------------- box dimension
@dataclass(frozen=True)
class BoxDimension:
    dimension: float
    r_squared: float
    sizes: np.ndarray
    counts: np.ndarray


def box_dimension(mask: np.ndarray, sizes: Sequence[int] | None = None) -> BoxDimension:
    """Box-counting dimension of the True cells of a 2D mask.

    Args:
        mask: Boolean raster.
        sizes: Box edge lengths in cells; powers of two from 1 to a quarter
            of the raster side by default.

    Raises:
        ValueError: With fewer than three scales, an empty set or a degenerate fit.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty sample set")
    if sizes is None:
        side = min(mask.shape)
        sizes = [2 ** k for k in range(int(np.log2(max(side // 4, 1))) + 1)]
    sizes = [int(s) for s in sizes]
    if len(sizes) < 3:
        raise ValueError("need at least three scales")
    counts = []
    for s in sizes:
        H = -(-mask.shape[0] // s) * s
        Wd = -(-mask.shape[1] // s) * s
        pad = np.zeros((H, Wd), dtype=bool)
        pad[:mask.shape[0], :mask.shape[1]] = mask
        counts.append(int(pad.reshape(H // s, s, Wd // s, s).any(axis=(1, 3)).sum()))
    x = np.log(1.0 / np.array(sizes, dtype=float))
    y = np.log(np.array(counts, dtype=float))
    if np.ptp(y) == 0:
        raise ValueError("degenerate fit: box counts do not change with scale")
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    r2 = 1 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())
    return BoxDimension(float(slope), r2, np.array(sizes), np.array(counts))
