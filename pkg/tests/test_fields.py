import math

import numpy as np
import pytest

from novikov.fields import (FieldError, PlaneEmbedding, PseudoperiodicSpec, TrigField, cos3, cos3d, decompose,
                            eval_field, frequency_generators, grad_field, load_field, parse_field, rational_rank,
                            restrict_to_plane)

TWO_PI = 2 * math.pi


def cos3d_product(p):
    x, y, z = np.moveaxis(np.asarray(p), -1, 0)
    c = np.cos
    return (c(TWO_PI * x) * c(TWO_PI * y) + c(TWO_PI * y) * c(TWO_PI * z)
            + c(TWO_PI * z) * c(TWO_PI * x))


def test_cos3_values():
    assert eval_field(cos3(), (0, 0, 0)) == pytest.approx(3.0, abs=1e-15)
    assert eval_field(cos3(), (0.5, 0, 0)) == pytest.approx(1.0, abs=1e-15)


def test_cos3d_value_and_product_form(rng):
    f = cos3d()
    assert len(f) == 6
    assert eval_field(f, (0, 0, 0)) == pytest.approx(3.0, abs=1e-12)
    pts = rng.random((1000, 3)) * 4 - 2
    assert np.max(np.abs(f.value(pts) - cos3d_product(pts))) < 1e-12


def test_gradients():
    assert np.allclose(grad_field(cos3(), (0, 0, 0)), 0)
    assert np.allclose(grad_field(cos3(), (0.25, 0, 0)), (-TWO_PI, 0, 0), atol=1e-12)


@pytest.mark.parametrize("make", [cos3, cos3d])
def test_gradient_and_hessian_match_finite_differences(make, rng):
    f = make()
    h = 1e-6
    for p in rng.random((20, 3)):
        fd = np.array([(f.value(p + h * e) - f.value(p - h * e)) / (2 * h) for e in np.eye(3)])
        g = f.gradient(p)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-6 * np.abs(g).max())
        fdh = np.array([(f.gradient(p + h * e) - f.gradient(p - h * e)) / (2 * h) for e in np.eye(3)])
        assert np.allclose(f.hessian(p), fdh, atol=1e-5)


def test_translation_invariance(rng):
    f = cos3d()
    p = rng.random((200, 3))
    n = rng.integers(-50, 50, size=(200, 3))
    assert np.max(np.abs(f.value(p + n) - f.value(p))) < 1e-12


def test_dimension_mismatch():
    with pytest.raises(FieldError):
        cos3().value((0.0, 0.0))


def test_sign_normalization_merges_duplicates():
    f = TrigField.from_terms([((1, 0), 1.0, 0.3), ((-1, 0), 1.0, -0.3)])
    assert len(f) == 1
    assert tuple(f.freqs[0]) == (1, 0)
    assert f.amps[0] == pytest.approx(2.0)
    g = TrigField.from_terms([((0, -2), 1.0, 0.5)])
    assert tuple(g.freqs[0]) == (0, 2) and g.phases[0] == pytest.approx(-0.5)
    assert g.value(np.array([0.1, 0.2])) == pytest.approx(math.cos(-TWO_PI * 0.4 + 0.5))


def test_text_round_trip(tmp_path):
    f = cos3d()
    again = parse_field(f.to_text())
    assert again == f
    p = tmp_path / "f.txt"
    p.write_text("2\n1 0  1.0 0.0\n0 1  0.5 1.25  # comment\n")
    g = load_field(str(p))
    assert g.dimension == 2 and len(g) == 2
    with pytest.raises(FieldError):
        parse_field("3\n1 0 1.0 0.0\n")
    with pytest.raises(FieldError):
        load_field("no-such-field")


def test_decompose_arnold_function():
    def F(p):
        x, y = p[..., 0], p[..., 1]
        return y + math.sqrt(2) * x + np.cos(TWO_PI * x) + np.cos(TWO_PI * y)

    d = decompose(F, 2)
    assert np.allclose(d.linear, (math.sqrt(2), 1.0), atol=1e-9)
    assert len(d.periodic) == 2
    assert sorted(map(tuple, d.periodic.freqs.tolist())) == [(0, 1), (1, 0)]
    assert np.allclose(d.periodic.amps, 1.0, atol=1e-9)


def test_decompose_sin_squared():
    def F(p):
        x, y = p[..., 0], p[..., 1]
        return 3 * x - y + np.sin(TWO_PI * x) ** 2

    d = decompose(F, 2)
    assert np.allclose(d.linear, (3.0, -1.0), atol=1e-9)
    pts = np.random.default_rng(1).random((100, 2)) * 10
    assert np.allclose(d.value(pts), F(pts), atol=1e-9)


def test_decompose_periodic_and_explicit():
    d = decompose(cos3().value, 3)
    assert np.allclose(d.linear, 0, atol=1e-12)
    pair = decompose(((1.0, 2.0, 3.0), cos3()))
    assert isinstance(pair, PseudoperiodicSpec)
    assert pair.value(np.zeros(3)) == pytest.approx(3.0)


def test_decompose_rejects_non_pseudoperiodic():
    with pytest.raises(FieldError):
        decompose(lambda p: p[..., 0] ** 2, 1)


def test_restriction_to_line_example():
    phi = TrigField.from_terms([((1, 0), 1.0, 0.0), ((0, 1), 1.0, 0.0)])
    line = PlaneEmbedding((0.0, 0.0), [(1.0, math.sqrt(2))])
    f = restrict_to_plane(phi, line)
    t = np.linspace(-5, 5, 101)[:, None]
    assert np.allclose(f.value(t), np.cos(TWO_PI * t[:, 0]) + np.cos(math.sqrt(2) * TWO_PI * t[:, 0]))
    gens = frequency_generators(phi, line)
    assert sorted(gens[:, 0]) == pytest.approx([1.0, math.sqrt(2)])


def test_restriction_matches_direct_composition(rng):
    pl = PlaneEmbedding.plane(rng.random(3), rng.normal(size=3), rng.normal(size=3))
    f = restrict_to_plane(cos3(), pl)
    st = rng.normal(size=(1000, 2)) * 10
    direct = cos3().value(pl.base + st @ pl.directions)
    assert np.max(np.abs(f.value(st) - direct)) < 1e-12


def test_coordinate_plane_restriction_is_periodic():
    pl = PlaneEmbedding.plane((0.1, 0.2, 0.3), (1, 0, 0), (0, 1, 0))
    f = restrict_to_plane(cos3(), pl)
    st = np.random.default_rng(2).random((50, 2))
    assert np.allclose(f.value(st), f.value(st + np.array([3.0, -2.0])))


def test_degenerate_plane_rejected():
    with pytest.raises(FieldError):
        PlaneEmbedding.plane((0, 0, 0), (1, 2, 3), (2, 4, 6))


def test_frequency_module_rank():
    generic = PlaneEmbedding.plane((0, 0, 0), (1.0, math.sqrt(2), math.pi), (math.e, 0.3, -1.7))
    assert rational_rank(frequency_generators(cos3(), generic)) == 3
    assert rational_rank([[1.0], [math.sqrt(2)], [1 + math.sqrt(2)]]) == 2
    const = TrigField(2, np.zeros((0, 2)), [], [])
    assert len(frequency_generators(const, PlaneEmbedding.plane((0, 0), (1, 0), (0, 1)))) == 0
