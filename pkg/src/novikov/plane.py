"""Level lines of pseudoperiodic and quasiperiodic functions on the plane.

Plane functions are objects with ``value``, ``gradient`` and ``hessian``
methods acting on arrays of shape (..., 2): two-variable
:class:`~novikov.fields.TrigField` and
:class:`~novikov.fields.PseudoperiodicSpec` objects and plane restrictions
:class:`~novikov.fields.PlaneFunction` all qualify.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from skimage import measure

from .fields import PseudoperiodicSpec, TrigField


class PlaneError(ValueError):
    """Invalid window or function for plane analysis."""


class NearCriticalLevelWarning(UserWarning):
    """The traced level passes close to a critical point of the function."""


@dataclass(frozen=True)
class PlaneWindow:
    """Square window ``center +- half_width`` sampled at ``resolution`` nodes per unit length.

    Nodes sit at ``center + k / resolution`` so that a doubled window with the
    same resolution contains every node of the original one.
    """

    center: tuple[float, float] = (0.0, 0.0)
    half_width: float = 8.0
    resolution: int = 16

    def __post_init__(self):
        if not self.half_width > 0 or self.resolution < 1:
            raise PlaneError("window extent and resolution must be positive")

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n = int(round(self.half_width * self.resolution))
        k = np.arange(-n, n + 1) / self.resolution
        return self.center[0] + k, self.center[1] + k

    def doubled(self) -> "PlaneWindow":
        return PlaneWindow(self.center, 2 * self.half_width, self.resolution)


@dataclass
class LevelComponent:
    """One polyline of a level set inside a window.

    Attributes:
        points: Vertices, shape (n, 2); closed polylines repeat the first vertex.
        unbounded_candidate: The polyline reaches the window boundary.
        confirmed_unbounded: Still reaches the boundary in every doubled window.
        near_critical: Some vertex has a small gradient.
    """

    points: np.ndarray
    unbounded_candidate: bool
    confirmed_unbounded: bool = False
    near_critical: bool = False

    @property
    def closed(self) -> bool:
        return not self.unbounded_candidate


def _frequencies(f) -> np.ndarray:
    if isinstance(f, TrigField):
        return f.freqs.astype(float)
    if isinstance(f, PseudoperiodicSpec):
        return f.periodic.freqs.astype(float)
    k = getattr(f, "plane_frequencies", None)
    return np.zeros((0, 2)) if k is None else np.asarray(k, dtype=float).reshape(-1, 2)


def _gradient_scale(f) -> float:
    """Typical gradient magnitude used to judge near-criticality."""
    k = _frequencies(f)
    lin = np.linalg.norm(getattr(f, "linear", np.zeros(2)))
    amps = getattr(getattr(f, "periodic", f), "amps", np.ones(len(k)))
    per = float(np.sum(np.abs(amps) * 2 * np.pi * np.linalg.norm(k, axis=1))) if len(k) else 0.0
    return max(lin + per, 1e-300)


def _grid_values(f, window: PlaneWindow) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs, ys = window.axes
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return xs, ys, np.asarray(f.value(np.stack([X, Y], axis=-1)), dtype=float)


def _refine(f, pts: np.ndarray, level: float, steps: int = 3) -> np.ndarray:
    for _ in range(steps):
        g = np.asarray(f.gradient(pts), dtype=float)
        r = np.asarray(f.value(pts), dtype=float) - level
        gg = np.einsum("ij,ij->i", g, g)
        ok = gg > 1e-24
        pts = pts.copy()
        pts[ok] -= (r[ok] / gg[ok])[:, None] * g[ok]
    return pts


def trace_level_components(f, level: float, window: PlaneWindow, refine: bool = True,
                           critical_fraction: float = 1e-3) -> list[LevelComponent]:
    """Level-set polylines of ``f`` inside ``window``.

    Marching squares gives linearly interpolated vertices, which are then
    pulled onto the level by a few Newton steps along the gradient.
    Polylines that end on the window boundary are unbounded candidates.

    Args:
        f: Plane function.
        level: Level value.
        window: Sampling window.
        refine: Apply the Newton refinement.
        critical_fraction: Vertices with gradient below this fraction of the
            typical gradient scale flag the component as near-critical.
    """
    xs, ys, Z = _grid_values(f, window)
    h = 1.0 / window.resolution
    comps = []
    scale = _gradient_scale(f)
    for c in measure.find_contours(Z, level):
        pts = np.column_stack([xs[0] + c[:, 0] * h, ys[0] + c[:, 1] * h])
        closed = bool(np.all(c[0] == c[-1]))
        if refine and len(pts):
            moved = _refine(f, pts, level)
            # stay near the original polyline; a jump means a bad Newton step
            keep = np.linalg.norm(moved - pts, axis=1) < h
            pts = np.where(keep[:, None], moved, pts)
            if closed:
                pts[-1] = pts[0]
        g = np.linalg.norm(np.asarray(f.gradient(pts), dtype=float), axis=1)
        near = bool(g.min() < critical_fraction * scale)
        comps.append(LevelComponent(pts, not closed, False, near))
    if any(cp.near_critical for cp in comps):
        warnings.warn(f"level {level} passes near a critical point", NearCriticalLevelWarning, stacklevel=2)
    return comps


def _touching(comps: list[LevelComponent], probe: np.ndarray, tol: float) -> LevelComponent | None:
    for cp in comps:
        if np.min(np.linalg.norm(cp.points - probe, axis=1)) < tol:
            return cp
    return None


def confirm_unbounded(f, level: float, window: PlaneWindow, doublings: int = 2) -> list[LevelComponent]:
    """Trace in ``window`` and mark unbounded candidates that persist under window doubling.

    A candidate is confirmed when the polyline through its middle vertex
    still reaches the boundary of each of ``doublings`` successively doubled
    windows.
    """
    base = trace_level_components(f, level, window)
    larger = []
    w = window
    for _ in range(doublings):
        w = w.doubled()
        larger.append(trace_level_components(f, level, w))
    tol = 0.5 / window.resolution
    for cp in base:
        if not cp.unbounded_candidate:
            continue
        probe = cp.points[len(cp.points) // 2]
        cp.confirmed_unbounded = all(
            (m := _touching(comps, probe, tol)) is not None and m.unbounded_candidate for comps in larger)
    return base


def count_unbounded(f, level: float, window: PlaneWindow, doublings: int = 2) -> int:
    """Number of confirmed unbounded level components seen in ``window``."""
    return sum(cp.confirmed_unbounded for cp in confirm_unbounded(f, level, window, doublings))


@dataclass(frozen=True)
class CylinderEstimate:
    radius: float
    history: tuple[float, ...]
    half_widths: tuple[float, ...]
    stable: bool


def cylinder_radius(f: PseudoperiodicSpec, level: float, half_widths: Sequence[float] = (8, 16, 32),
                    resolution: int = 16, rel_tol: float = 0.05) -> CylinderEstimate:
    """Largest distance of level points from the line ``<linear, x> = level``.

    The estimate is taken over windows of growing half-width; it is stable
    when the last two estimates differ by at most ``rel_tol``.  An unstable
    sequence is reported, not raised, since it signals a non-generic direction.
    """
    lin = np.asarray(f.linear, dtype=float)
    nrm = float(np.linalg.norm(lin))
    if nrm == 0:
        raise PlaneError("the linear part must be nonzero")
    hist = []
    for hw in half_widths:
        comps = trace_level_components(f, level, PlaneWindow((0.0, 0.0), float(hw), resolution))
        pts = np.concatenate([cp.points for cp in comps]) if comps else np.zeros((0, 2))
        hist.append(float(np.max(np.abs(pts @ lin - level)) / nrm) if len(pts) else 0.0)
    a, b = hist[-2], hist[-1]
    stable = abs(b - a) <= rel_tol * max(abs(b), 1e-300) or max(a, b) < 1e-12
    return CylinderEstimate(hist[-1], tuple(hist), tuple(float(h) for h in half_widths), stable)


# ---------------------------------------------------------------------- critical points
@dataclass(frozen=True)
class CriticalPoints:
    """Nondegenerate critical points found in a disk.

    Attributes:
        points: Locations, shape (n, 2).
        values: Function values.
        index: Number of negative Hessian eigenvalues (0 min, 1 saddle, 2 max).
        degenerate: Number of discarded points with near-singular Hessian.
        center: Disk center.
        radius: Disk radius.
    """

    points: np.ndarray
    values: np.ndarray
    index: np.ndarray
    degenerate: int
    center: tuple[float, float]
    radius: float

    @property
    def area(self) -> float:
        return float(np.pi * self.radius ** 2)


def seed_pitch(f) -> float:
    """A quarter of the smallest harmonic period."""
    k = _frequencies(f)
    kmax = float(np.max(np.linalg.norm(k, axis=1))) if len(k) else 0.0
    return 0.25 / kmax if kmax > 0 else 1.0


def critical_points(f, radius: float, center: Sequence[float] = (0.0, 0.0), iterations: int = 30,
                    tol: float = 1e-10) -> CriticalPoints:
    """Critical points of ``f`` in a disk by Newton's method on the gradient.

    Seeds form a square grid at :func:`seed_pitch`; converged points are
    deduplicated on a 1e-6 grid.
    """
    center = (float(center[0]), float(center[1]))
    if not _frequencies(f).size:
        return CriticalPoints(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=int), 0, center, radius)
    pitch = seed_pitch(f)
    r = radius + pitch
    k = np.arange(-np.ceil(r / pitch), np.ceil(r / pitch) + 1) * pitch
    X, Y = np.meshgrid(center[0] + k, center[1] + k, indexing="ij")
    p = np.column_stack([X.ravel(), Y.ravel()])
    p = p[np.hypot(p[:, 0] - center[0], p[:, 1] - center[1]) <= r]
    for it in range(iterations):
        g = np.asarray(f.gradient(p), dtype=float)
        H = np.asarray(f.hessian(p), dtype=float)
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        step = np.column_stack([H[:, 1, 1] * g[:, 0] - H[:, 0, 1] * g[:, 1],
                                -H[:, 1, 0] * g[:, 0] + H[:, 0, 0] * g[:, 1]]) / det[:, None]
        # damp steps longer than the seed pitch
        n = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, pitch / np.maximum(n, 1e-300))[:, None]
        p = p - step
        if it % 4 == 3:
            # many seeds converge to the same point: thin the working set
            p = p[np.hypot(p[:, 0] - center[0], p[:, 1] - center[1]) <= r]
            _, first = np.unique(np.round(p * 1e8).astype(np.int64), axis=0, return_index=True)
            p = p[np.sort(first)]
    g = np.linalg.norm(np.asarray(f.gradient(p), dtype=float), axis=1)
    p = p[g < tol * _gradient_scale(f) + 1e-12]
    p = p[np.hypot(p[:, 0] - center[0], p[:, 1] - center[1]) <= radius]
    if len(p):
        _, first = np.unique(np.round(p * 1e6).astype(np.int64), axis=0, return_index=True)
        p = p[np.sort(first)]
        # merge points split across a rounding boundary
        order = np.lexsort((p[:, 1], p[:, 0]))
        p = p[order]
        keep = np.ones(len(p), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(p, axis=0), axis=1) > 1e-5
        p = p[keep]
    H = np.asarray(f.hessian(p), dtype=float).reshape(-1, 2, 2)
    eig = np.linalg.eigvalsh(H) if len(p) else np.zeros((0, 2))
    scale = _gradient_scale(f) * 2 * np.pi * max(float(np.max(np.linalg.norm(_frequencies(f), axis=1))), 1e-300)
    nondeg = np.min(np.abs(eig), axis=1) > 1e-8 * scale if len(p) else np.zeros(0, dtype=bool)
    p = p[nondeg]
    idx = np.sum(eig[nondeg] < 0, axis=1)
    vals = np.asarray(f.value(p), dtype=float).reshape(-1)
    return CriticalPoints(p, vals, idx.astype(int), int((~nondeg).sum()), center, float(radius))


@dataclass(frozen=True)
class DensityEstimate:
    """Critical point density of one index for a schedule of radii."""

    order: int
    level: float
    radii: tuple[float, ...]
    densities: tuple[float, ...]
    relative_change: float
    degenerate: int


def critical_density(f, c: float, order: int, radii: Sequence[float] = (25, 50, 100),
                     center: Sequence[float] = (0.0, 0.0)) -> DensityEstimate:
    """Density of index-``order`` critical points with value at most ``c``.

    The density is the count in the disk of radius R divided by its area;
    ``relative_change`` compares the last two radii.
    """
    if order not in (0, 1, 2):
        raise PlaneError("order must be 0, 1 or 2 on the plane")
    dens, degen = [], 0
    big = critical_points(f, max(radii), center)
    d = np.hypot(big.points[:, 0] - center[0], big.points[:, 1] - center[1])
    for R in radii:
        sel = (d <= R) & (big.index == order) & (big.values <= c)
        dens.append(float(np.sum(sel)) / (np.pi * R * R))
    degen = big.degenerate
    a, b = dens[-2:] if len(dens) > 1 else (dens[0], dens[0])
    rel = abs(b - a) / max(abs(b), 1e-300) if max(a, b) > 0 else 0.0
    return DensityEstimate(order, float(c), tuple(float(r) for r in radii), tuple(dens), rel, degen)


# ---------------------------------------------------------------------- Euler characteristic
def sublevel_euler(f, c: float, radius: float, center: Sequence[float] = (0.0, 0.0),
                   resolution: int | None = None) -> int:
    """Euler characteristic of {f <= c} in a disk, by counting closed pixels.

    Each sample inside the disk with value at most c stands for a closed
    square; the union's Euler characteristic is vertices - edges + faces.
    """
    if resolution is None:
        resolution = int(np.ceil(1.0 / (seed_pitch(f) / 4)))
    h = 1.0 / resolution
    n = int(np.ceil(radius / h))
    k = (np.arange(-n, n) + 0.5) * h
    X, Y = np.meshgrid(center[0] + k, center[1] + k, indexing="ij")
    inside = np.hypot(X - center[0], Y - center[1]) <= radius
    M = np.zeros_like(inside)
    rows = 256
    for a in range(0, len(k), rows):
        sl = slice(a, a + rows)
        M[sl] = inside[sl] & (np.asarray(f.value(np.stack([X[sl], Y[sl]], axis=-1))) <= c)
    P = np.pad(M, 1)
    F = int(M.sum())
    E = int((P[1:, :] | P[:-1, :]).sum() + (P[:, 1:] | P[:, :-1]).sum())
    V = int((P[1:, 1:] | P[1:, :-1] | P[:-1, 1:] | P[:-1, :-1]).sum())
    return V - E + F


@dataclass(frozen=True)
class EulerCheck:
    alternating: float   # sum (-1)^k N^k per unit area
    direct: float        # pixel Euler characteristic per unit area
    discrepancy: float   # absolute difference


def euler_density_check(f, c: float, radius: float, center: Sequence[float] = (0.0, 0.0),
                        resolution: int | None = None) -> EulerCheck:
    """Alternating critical-point sum against the sublevel Euler characteristic, both per unit area."""
    cp = critical_points(f, radius, center)
    below = cp.values <= c
    alt = float(sum((-1) ** k * np.sum(below & (cp.index == k)) for k in (0, 1, 2))) / cp.area
    direct = sublevel_euler(f, c, radius, center, resolution) / cp.area
    return EulerCheck(alt, direct, abs(alt - direct))
