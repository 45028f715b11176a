from fractions import Fraction

import numpy as np
import pytest

from novikov.gasket import (GASKET_BOX_SIZES, ROOTS, GasketOverflowError, ProjTriangle, enumerate_gasket,
                            format_triangle, gasket_depth_map, gasket_residual_raster, leaf_triangles,
                            locate, mu_cube_analytic_map, norm_bounds, spherical_area, subdivide,
                            zone_norm_statistics)
from novikov.intmath import primitive
from novikov.stability import box_dimension


def det3(a, b, c):
    return int(round(np.linalg.det(np.array([a, b, c], dtype=float))))


@pytest.mark.parametrize("depth", range(6))
def test_counts(depth):
    root = ROOTS["T1"]
    assert len(leaf_triangles(root, depth)) == 3 ** depth
    assert len(enumerate_gasket(root, depth)) == (3 ** (depth + 1) - 1) // 2
    gen = enumerate_gasket(root, depth, order="generation")
    assert len(gen[(3 ** depth - 1) // 2:]) == 3 ** depth
    assert sorted(gen, key=format_triangle) == sorted(enumerate_gasket(root, depth), key=format_triangle)


def test_subdivision_determinants():
    # corner children keep the parent determinant, the removed middle doubles it
    t = ROOTS["unit"]
    for _ in range(4):
        kids, removed = subdivide(t)
        for k in kids:
            assert abs(det3(*k.vertices)) == abs(det3(*t.vertices))
        assert abs(det3(*removed.vertices)) == 2 * abs(det3(*t.vertices))
        t = kids[1]


def test_orders_and_errors():
    root = ROOTS["unit"]
    first = enumerate_gasket(root, 2)
    assert first[0].soul == (1, 1, 1)
    assert first[1] == subdivide(subdivide(root)[0][0])[1]
    with pytest.raises(ValueError):
        enumerate_gasket(root, -1)
    with pytest.raises(ValueError):
        enumerate_gasket(root, 1, order="random")
    with pytest.raises(GasketOverflowError):
        enumerate_gasket(root, 10, max_abs=20)
    with pytest.raises(ValueError):
        ProjTriangle((2, 0, 0), (0, 1, 0), (0, 0, 1))
    with pytest.raises(ValueError):
        ProjTriangle((1, 0, 0), (-1, 0, 0), (0, 0, 1))


def test_format_triangle():
    assert format_triangle(ROOTS["T1"]) == "1 1 0 0 1 1 1 0 1"


def test_removed_triangles_are_located_by_barycentric_walk():
    for name in ("T1", "T2", "T3", "T4"):
        for depth_level, t in enumerate_with_depth(ROOTS[name], 4):
            m = locate(t.soul, 30)
            assert m.region == "gasket" and m.root == name
            assert primitive(list(m.soul)) == t.soul and m.depth == depth_level


def enumerate_with_depth(root, depth):
    level = [root]
    for d in range(depth + 1):
        nxt = []
        for t in level:
            kids, removed = subdivide(t)
            yield d, removed
            nxt.extend(kids)
        level = nxt


def test_squares_and_boundaries():
    assert locate((1, 2, 5), 10).region == "Qz"
    assert locate((7, 1, -2), 10).soul == (1, 0, 0)
    assert locate((1, 1, 2), 10).region == "boundary"
    assert locate((Fraction(1, 3), Fraction(1, 3), Fraction(1, 3)), 10).soul == (1, 1, 1)


def test_vectorized_depth_map_matches_locate(rng):
    pts = rng.integers(-40, 41, size=(300, 3))
    pts = pts[np.any(pts != 0, axis=1)]
    depth = 6
    fast = gasket_depth_map(pts.astype(float), depth)
    for p, d in zip(pts, fast):
        m = locate(tuple(int(x) for x in p), depth)
        if m.region == "boundary":
            continue
        if m.region == "gasket":
            assert d == m.depth
        elif m.region == "residual":
            assert d == depth + 1
        else:
            assert d == -1


def test_norm_bounds_in_generation_order():
    tris = enumerate_gasket(ROOTS["T1"], 6, order="generation")
    for n, t in enumerate(tris):
        lo, hi = norm_bounds(n)
        norm2 = sum(x * x for x in t.soul)
        assert lo <= norm2 + 1e-9 and norm2 <= hi + 1e-9, n


def test_zone_statistics():
    stats = zone_norm_statistics(mu_cube_analytic_map(5))
    assert -3.5 <= stats.area_exponent <= -2.5
    with pytest.raises(ValueError):
        zone_norm_statistics(mu_cube_analytic_map(2))


def test_analytic_map_covers_projective_plane():
    # three squares plus four root triangles tile the projective plane (area 2 pi)
    m = mu_cube_analytic_map(1)
    squares = sum(spherical_area(ProjTriangle(q[0], q[1], q[2])) + spherical_area(ProjTriangle(q[0], q[2], q[3]))
                  for q in m.squares.values())
    roots = sum(spherical_area(t) for t in m.roots.values())
    assert squares + roots == pytest.approx(2 * np.pi, rel=1e-12)


def test_gasket_box_dimension():
    residual, inside = gasket_residual_raster(depth=8, raster=2048)
    assert inside.sum() / inside.size == pytest.approx(1 / 8, rel=1e-2)
    bd = box_dimension(residual, GASKET_BOX_SIZES)
    assert bd.dimension == pytest.approx(1.7, abs=0.1)
    assert bd.r_squared > 0.99
