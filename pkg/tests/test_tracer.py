import math

import numpy as np
import pytest

from novikov.fields import cos3
from novikov.gasket import locate
from novikov.intmath import primitive
from novikov.mesh import extract_isosurface, mu_cube_mesh
from novikov.tracer import (TRIBONACCI, Direction, LevelSurface, TraceError, Trajectory, classify,
                            diffusion_exponent, exact_trace_mu_cube, find_critical_points, fit_line,
                            trace_exact_section, trace_mesh_section, trace_section,
                            tribonacci_direction)


def test_direction_normalization():
    assert Direction.of((2, -4, 6)).integer == primitive([2, -4, 6])
    assert Direction.of((0.0, 0.0, -2.0)).vector.tolist() == [0.0, 0.0, 2.0]
    with pytest.raises(ValueError):
        Direction.of((0.0, 0.0, 0.0))


def test_tribonacci_direction():
    a = TRIBONACCI
    assert a ** 3 == pytest.approx(a * a + a + 1, rel=1e-15)
    d = tribonacci_direction()
    assert not d.rational
    assert d.vector / d.vector[2] == pytest.approx([a * a - a - 1, a - 1, 1.0])


@pytest.mark.parametrize("c, B, saddles, extrema", [
    (0.0, (0, 0, 1), 4, 0),
    (0.5, (0, 0, 1), 4, 0),
    (2.5, (0, 0, 1), 0, 2),
])
def test_critical_points_vertical_field(c, B, saddles, extrema):
    # tangency needs sin 2pi x = sin 2pi y = 0, leaving cos 2pi z = c - (+-1 +-1)
    cps = find_critical_points(cos3(), c, B)
    kinds = [cp.kind for cp in cps]
    assert (kinds.count("saddle"), kinds.count("extremum")) == (saddles, extrema)
    for cp in cps:
        x, y = cp.location[:2]
        assert min(abs(x), abs(x - 0.5), abs(x - 1)) < 1e-9
        assert min(abs(y), abs(y - 0.5), abs(y - 1)) < 1e-9


@pytest.mark.parametrize("c", [-0.6, 0.2])
def test_critical_point_count_matches_euler_characteristic(c):
    # height is a Morse function on the genus-3 level: saddles - extrema = -chi = 4
    cps = find_critical_points(cos3(), c, (1, 2, 3))
    kinds = [cp.kind for cp in cps]
    assert "degenerate" not in kinds
    assert kinds.count("saddle") - kinds.count("extremum") == 4


def test_vertical_sections_close_trivially():
    # the plane z = s cuts cos 2pi x + cos 2pi y = const, whose components are ovals
    surf = LevelSurface(cos3(), 0.0)
    for s in (0.1, 0.3, 0.45):
        t = trace_section(surf, (0, 0, 1), s, budget=50)
        assert t.closed and t.translation == (0, 0, 0)
        assert classify(t).kind == "Trivial"
        assert np.max(np.abs(cos3().value(t.points))) < 1e-8
        assert np.max(np.abs(t.points[:, 2] - s)) < 1e-9


def test_rational_sections_close_with_orthogonal_class(rng):
    surf = LevelSurface(cos3(), 0.0)
    for _ in range(6):
        B = primitive(list(rng.integers(-4, 5, 3)) or [1, 0, 0])
        if not any(B):
            continue
        s = float(rng.uniform(0, 1))
        t = trace_section(surf, B, s, budget=200)
        assert t.closed
        assert np.dot(B, t.translation) == 0


def test_mesh_trace_matches_exact_trace():
    mesh = mu_cube_mesh()
    for B, s in (((1, 2, 5), 0.3), ((1, 1, 1), 0.2), ((2, 3, 4), 0.7)):
        exact = exact_trace_mu_cube(B, s)
        approx = trace_mesh_section(mesh, B, s, face=None, budget=1e4)
        assert exact.closed and approx.closed
        # same section component up to the direction of travel
        assert approx.translation in (exact.translation, tuple(-x for x in exact.translation))
        assert approx.length == pytest.approx(exact.length, rel=1e-9)


@pytest.mark.parametrize("B", [(1, 2, 5), (3, 1, 7), (1, 3, 1), (4, 2, 5)])
def test_exact_classes_follow_analytic_soul(B):
    # a closed class lies in the lattice orthogonal to both the field and the soul
    soul = locate(B, 30).soul
    classes = []
    for s in ("3/10", "1/7", "5/11", "7/13"):
        t = exact_trace_mu_cube(B, s)
        assert t.closed
        assert np.dot(B, t.translation) == 0 and np.dot(soul, t.translation) == 0
        classes.append(t.translation)
    assert any(any(n) for n in classes)


def test_zone_centre_sections_are_contractible():
    # the field direction equals its own soul, so no class survives both constraints
    for s in ("3/10", "1/7"):
        assert exact_trace_mu_cube((2, 1, 2), s).translation == (0, 0, 0)


def test_exact_trace_rejects_plane_through_vertex():
    with pytest.raises(TraceError, match="vertex"):
        exact_trace_mu_cube((1, 2, 5), 0)


def test_exact_trace_needs_exact_mesh():
    mesh = extract_isosurface(cos3(), 0.0, 8)
    with pytest.raises(TraceError):
        trace_exact_section(mesh, (1, 0, 0), 0.3)


def test_mesh_and_field_traces_agree_on_class():
    f = cos3()
    mesh = extract_isosurface(f, 0.0, 48)
    for B, s in (((1, 1, 0), 0.13), ((1, 2, 3), 0.37)):
        a = trace_section(LevelSurface(f, 0.0), B, s, budget=200)
        b = trace_mesh_section(mesh, B, s, budget=200)
        assert a.closed and b.closed
        assert abs(np.dot(B, b.translation)) == 0
        assert int(np.abs(a.translation).sum()) == int(np.abs(b.translation).sum())


def test_open_section_in_square_zone_is_asymptotic():
    mesh = mu_cube_mesh()
    B = np.array([0.3, 0.2 * math.sqrt(2), 1.0])
    soul = np.array([0.0, 0.0, 1.0])
    t = trace_mesh_section(mesh, B, 0.123, budget=500)
    res = classify(t, retrace=lambda b: trace_mesh_section(mesh, B, 0.123, budget=b))
    assert res.kind == "OpenAsymptotic"
    expect = np.cross(soul, B)
    expect /= np.linalg.norm(expect)
    assert abs(abs(res.direction @ expect) - 1) < 1e-4


def test_classify_without_follow_up_is_inconclusive():
    mesh = mu_cube_mesh()
    t = trace_mesh_section(mesh, tribonacci_direction(), 0.1234, budget=200)
    assert not t.closed
    assert classify(t).kind == "Undetermined"


def test_fit_line_recovers_direction():
    s = np.linspace(0, 200 * np.pi, 4001)
    pts = np.outer(s, [1.0, 2.0, 2.0]) / 3 + 0.15 * np.sin(s)[:, None] * np.array([0.0, 1.0, -1.0])
    u, r = fit_line(pts)
    assert u == pytest.approx([1 / 3, 2 / 3, 2 / 3], abs=1e-3)
    assert r == pytest.approx(0.15 * math.sqrt(2), rel=1e-2)


def _random_walk_trace(rng, n, dim_exponent):
    pts = np.cumsum(rng.normal(size=(n, 3)), axis=0) if dim_exponent == 0.5 else np.outer(np.arange(n), [1, 0, 0])
    return Trajectory(pts.astype(float), Direction.of((0, 0, 1)), 0.0, "open", None, float(n), float(n))


def test_diffusion_exponent_on_known_walks(rng):
    walks = [_random_walk_trace(rng, 20000, 0.5) for _ in range(12)]
    est = diffusion_exponent(walks)
    assert 0.4 < est.value < 0.6
    assert est.interval[0] <= est.value <= est.interval[1]
    lines = [_random_walk_trace(rng, 20000, 1.0) for _ in range(8)]
    assert diffusion_exponent(lines).value == pytest.approx(1.0, abs=0.02)


def test_diffusion_exponent_input_errors(rng):
    walks = [_random_walk_trace(rng, 2000, 0.5) for _ in range(12)]
    with pytest.raises(ValueError, match="at least 8"):
        diffusion_exponent(walks[:5])
    with pytest.raises(ValueError, match="decades"):
        diffusion_exponent(walks, min_length=100.0)
