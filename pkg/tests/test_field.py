import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hkfloer.field import (
    FieldMap,
    Target,
    TopologyError,
    analyze,
    constant,
    field_csv,
    from_values,
    inner,
    mean_value,
    quadrature_inner,
    random_bandlimited,
    read_field,
    synthesize,
    write_field,
)

seeds = st.integers(0, 2**20)


@given(seeds)
def test_synthesize_analyze_round_trip(sphere2, seed):
    f = random_bandlimited(sphere2, Target(2), 2, 1.0, seed)
    assert np.allclose(analyze(f), f.coeffs, atol=1e-12)
    g = from_values(sphere2, Target(2), f.values)
    assert not g.truncated
    assert np.allclose(g.coeffs, f.coeffs, atol=1e-12)


@pytest.mark.parametrize("j", [0, 3, 7])
def test_single_cosine_mode(torus6, j):
    c = np.zeros((1 + 2 * j + 1, 1, 4))
    c[1 + 2 * j, 0, 2] = 1 / np.sqrt(2)
    f = synthesize(torus6, Target(1), c)
    k = torus6.modes[j]
    assert np.allclose(f.values[:, 0, 2], np.cos(2 * np.pi * torus6.nodes @ k), atol=1e-14)
    assert np.allclose(f.values[:, 0, [0, 1, 3]], 0.0)


def test_single_sine_mode(torus6):
    c = np.zeros((3, 1, 4))
    c[2, 0, 0] = 1 / np.sqrt(2)
    f = synthesize(torus6, Target(1), c)
    assert np.allclose(f.values[:, 0, 0], np.sin(2 * np.pi * torus6.nodes @ torus6.modes[0]), atol=1e-14)


@pytest.mark.parametrize("domain", ["sphere2", "torus6"])
def test_constant_and_mean(domain, request):
    d = request.getfixturevalue(domain)
    x = np.array([[0.1, -0.2, 0.3, 0.4], [1.0, 2.0, 3.0, 4.0]])
    f = constant(d, Target(2), x)
    assert np.allclose(f.values, x[None], atol=1e-14)
    assert np.allclose(mean_value(f), x, atol=1e-14)


def test_mean_of_degree_one_field_vanishes(sphere2):
    f = random_bandlimited(sphere2, Target(1), 2, 1.0, 5)
    c = f.coeffs.copy()
    c[0] = 0
    assert np.allclose(mean_value(f.with_coeffs(c)), 0.0, atol=1e-14)


def test_mean_needs_lift_for_noncontractible_torus_maps(torus6):
    f = constant(torus6, Target(1, 1.0), np.zeros(4))
    bad = dataclasses.replace(f, contractible=False)
    with pytest.raises(TopologyError):
        mean_value(bad)
    lifted = dataclasses.replace(bad, winding=np.zeros((3, 4)))
    assert np.allclose(mean_value(lifted), 0.0)


def test_random_bandlimited(sphere2):
    f = random_bandlimited(sphere2, Target(1), 1, 0.5, 0)
    assert np.abs(f.coeffs).max() <= 0.5
    assert np.all(f.coeffs[sphere2.nbasis_upto(1):] == 0)
    assert np.array_equal(f.coeffs, random_bandlimited(sphere2, Target(1), 1, 0.5, 0).coeffs)
    with pytest.raises(ValueError):
        random_bandlimited(sphere2, Target(1), 3, 1.0, 0)


@given(seeds)
def test_parseval(sphere2, seed):
    f = random_bandlimited(sphere2, Target(1), 2, 1.0, seed)
    g = random_bandlimited(sphere2, Target(1), 2, 1.0, seed + 1)
    assert inner(f, g) == pytest.approx(quadrature_inner(f, g), rel=1e-11, abs=1e-11)
    assert inner(f, g) == pytest.approx(2.0 * inner(f, g, weighted=False))
    assert f.norm() ** 2 == pytest.approx(quadrature_inner(f, f, weighted=False), rel=1e-12)


def test_synthesize_shape_checks(sphere1):
    with pytest.raises(ValueError):
        synthesize(sphere1, Target(2), np.zeros((3, 1, 4)))
    with pytest.raises(IndexError):
        synthesize(sphere1, Target(1), np.zeros((sphere1.nbasis + 1, 1, 4)))
    short = synthesize(sphere1, Target(1), np.ones((2, 4)))
    assert short.coeffs.shape == (sphere1.nbasis, 1, 4)


def test_arithmetic(sphere2, sphere1):
    f = random_bandlimited(sphere2, Target(1), 2, 1.0, 1)
    g = random_bandlimited(sphere2, Target(1), 2, 1.0, 2)
    assert np.allclose((f + g).values, f.values + g.values)
    assert np.allclose((f - g).coeffs, f.coeffs - g.coeffs)
    assert np.allclose((2 * f).values, 2 * f.values)
    assert np.allclose((-f).coeffs, -f.coeffs)
    with pytest.raises(ValueError):
        f + random_bandlimited(sphere1, Target(1), 1, 1.0, 1)


def test_target_validation():
    assert Target(2).dim == 8
    assert Target(1, 2.0).is_torus
    assert np.allclose(Target(1, 1.0).reduce([1.25, -0.25]), [0.25, 0.75])
    with pytest.raises(ValueError):
        Target(0)
    with pytest.raises(ValueError):
        Target(1, -1.0)


def test_binary_round_trip(tmp_path, sphere2, torus6):
    for d, target in ((sphere2, Target(2)), (torus6, Target(1, 1.0))):
        f = random_bandlimited(d, target, 2, 1.0, 9)
        path = tmp_path / f"{d.kind.value}.bin"
        write_field(f, path)
        g = read_field(path, d)
        assert isinstance(g, FieldMap)
        assert np.allclose(g.values, f.values, atol=1e-13, rtol=0)
        assert g.target == target


def test_read_rejects_other_domain(tmp_path, sphere2, sphere1):
    f = random_bandlimited(sphere2, Target(1), 1, 1.0, 0)
    write_field(f, tmp_path / "f.bin")
    with pytest.raises(ValueError):
        read_field(tmp_path / "f.bin", sphere1)
    (tmp_path / "junk.bin").write_bytes(b"not a field")
    with pytest.raises(ValueError):
        read_field(tmp_path / "junk.bin", sphere2)


def test_csv_export(torus6):
    f = random_bandlimited(torus6, Target(1), 1, 1.0, 3)
    text = field_csv(f).splitlines()
    comments = [line for line in text if line.startswith("#")]
    rows = [line for line in text if not line.startswith("#")]
    assert any("domain" in c for c in comments)
    assert rows[0] == "t1,t2,t3,f0_w,f0_x,f0_y,f0_z"
    assert len(rows) == 1 + len(torus6.nodes)
    assert np.allclose([float(v) for v in rows[5].split(",")[3:]], f.values[4, 0])
