import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hkfloer.dirac import (
    dirac_apply,
    dirac_matrix,
    hessian_apply,
    laplace_gap,
    laplace_identity_residual,
    laplacian_apply,
    mode_block,
    operator_matrix,
    poincare_constant,
    spectrum,
)
from hkfloer.domain import build_sphere_domain, build_torus_domain, conjugate_hopf_map, hopf_map
from hkfloer.field import Target, constant, inner, quadrature_inner, quaternion_field, random_bandlimited, synthesize
from hkfloer.hamiltonian import HamiltonianSpec, TrigTerm
from hkfloer.quat import UNITS, qconj

FRAMES = [
    np.eye(3),
    np.array([[1.0, 0.3, 0.0], [0.0, 1.2, -0.4], [0.2, 0.0, 0.9]]),
    np.array([[0.7, -0.5, 0.1], [0.4, 0.8, 0.3], [-0.2, 0.1, 1.1]]),
]


def y_field(d):
    return quaternion_field(d, lambda y: y)


def explicit_eigenfields(d):
    return {
        -3.0: y_field(d),
        1.0: quaternion_field(d, lambda y: y + 2 * qconj(y)),
        -4.0: quaternion_field(d, lambda y: conjugate_hopf_map(UNITS[0], y)),
    }


class TestDiracApply:
    @pytest.mark.parametrize("eigenvalue", [-3.0, 1.0, -4.0])
    def test_explicit_eigenfunctions(self, sphere2, eigenvalue):
        f = explicit_eigenfields(sphere2)[eigenvalue]
        assert not f.truncated
        Df = dirac_apply(f)
        assert np.abs(Df.coeffs - eigenvalue * f.coeffs).max() < 1e-12
        assert np.abs(Df.values - eigenvalue * f.values).max() < 1e-12

    def test_hopf_map_itself_is_not_an_eigenfunction(self, sphere2):
        f = quaternion_field(sphere2, lambda y: hopf_map(UNITS[0], y))
        Df = dirac_apply(f)
        best = inner(Df, f) / inner(f, f)
        assert np.linalg.norm(Df.coeffs - best * f.coeffs) > 0.5 * np.linalg.norm(f.coeffs)

    @pytest.mark.parametrize("domain", ["sphere2", "torus6"])
    def test_constant_in_kernel(self, domain, request):
        d = request.getfixturevalue(domain)
        assert np.abs(dirac_apply(constant(d, Target(2), np.arange(8.0))).coeffs).max() < 1e-13

    @given(st.integers(0, 2**16), st.floats(-3, 3))
    def test_linear_and_self_adjoint(self, sphere2, seed, a):
        f = random_bandlimited(sphere2, Target(1), 2, 1.0, seed)
        g = random_bandlimited(sphere2, Target(1), 2, 1.0, seed + 1)
        assert np.allclose(dirac_apply(a * f + g).coeffs, a * dirac_apply(f).coeffs + dirac_apply(g).coeffs, atol=1e-10)
        lhs, rhs = inner(dirac_apply(f), g), inner(f, dirac_apply(g))
        assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))
        assert quadrature_inner(dirac_apply(f), g) == pytest.approx(lhs, rel=1e-10, abs=1e-10)

    def test_matrix_matches_field_operator(self, torus6):
        f = random_bandlimited(torus6, Target(2), 2, 1.0, 4)
        M = dirac_matrix(torus6, 2)
        assert np.allclose(M @ f.flat(), dirac_apply(f).flat())
        assert np.allclose(M, M.T)


class TestHessian:
    def test_zero_hamiltonian_is_dirac(self, sphere2):
        f = random_bandlimited(sphere2, Target(1), 2, 1.0, 0)
        xi = random_bandlimited(sphere2, Target(1), 2, 1.0, 1)
        assert np.allclose(hessian_apply(f, HamiltonianSpec.zero(4), xi).coeffs, dirac_apply(xi).coeffs)

    def test_quadratic_well(self, sphere2):
        x0 = np.array([0.3, -0.1, 0.2, 0.5])
        H = HamiltonianSpec.quadratic_well(4, 0.7, x0)
        xi = constant(sphere2, Target(1), [1.0, 2.0, -1.0, 0.5])
        out = hessian_apply(constant(sphere2, Target(1), x0), H, xi)
        assert np.allclose(out.coeffs, -0.7 * xi.coeffs, atol=1e-13)

    @given(st.integers(0, 2**16))
    def test_symmetric(self, sphere2, seed):
        H = HamiltonianSpec(4, (TrigTerm((1, 0, 2, 0), 0.3, 0.4, (1.0, 0.0, 0.5, 0.0)), TrigTerm((0, 1, 1, 1), -0.2, 1.0)))
        f, xi, eta = (random_bandlimited(sphere2, Target(1), 1, 0.5, seed + j) for j in range(3))
        lhs = inner(hessian_apply(f, H, xi), eta)
        rhs = inner(xi, hessian_apply(f, H, eta))
        assert abs(lhs - rhs) <= 1e-10

    def test_mismatched_domains(self, sphere1, sphere2):
        with pytest.raises(ValueError):
            hessian_apply(constant(sphere1, Target(1), np.zeros(4)), HamiltonianSpec.zero(4),
                          constant(sphere2, Target(1), np.zeros(4)))

    def test_operator_matrix_needs_base_map(self, sphere1):
        with pytest.raises(ValueError):
            operator_matrix(sphere1, 1, H=HamiltonianSpec.zero(4))


class TestSphereSpectrum:
    def test_degree_one(self, sphere1):
        sp = spectrum(sphere1)
        assert sp.multiplicities() == {-3.0: 4, 0.0: 4, 1.0: 12}

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_multiplicities_by_trace_oracle(self, degree):
        # D is traceless on each degree block, with eigenvalues k and -(k+2) only
        expected = {0.0: 4}
        for k in range(1, degree + 1):
            expected[float(k)] = 2 * (k + 1) * (k + 2)
            expected[float(-k - 2)] = expected.get(float(-k - 2), 0) + 2 * k * (k + 1)
        assert spectrum(build_sphere_domain(degree)).multiplicities() == expected

    def test_contains_explicit_values(self, sphere2):
        sp = spectrum(sphere2)
        for v in (-4.0, -3.0, 0.0, 1.0):
            assert sp.contains(v, 1e-8)
        assert sp.residuals.max() < 1e-8

    def test_degree_relation(self, sphere3):
        w = spectrum(sphere3).eigenvalues
        levels = np.array([k * (k + 2) for k in range(4)])
        assert np.abs((w**2 + 2 * w)[:, None] - levels).min(axis=1).max() < 1e-8

    def test_eigenfields_orthonormal(self, sphere2):
        sp = spectrum(sphere2, n=2)
        fields = [sp.eigenfield(j) for j in range(0, len(sp.eigenvalues), 7)]
        G = np.array([[inner(a, b) for b in fields] for a in fields])
        assert np.abs(G - np.eye(len(fields))).max() < 1e-8

    def test_degree_tags(self, sphere2):
        sp = spectrum(sphere2)
        assert set(sp.degree_tags[np.isclose(sp.eigenvalues, -4)]) == {2}
        assert set(sp.degree_tags[np.isclose(sp.eigenvalues, -3)]) == {1}

    def test_truncated_degree(self, sphere2):
        assert len(spectrum(sphere2, 1).eigenvalues) == 4 * sphere2.nbasis_upto(1)
        with pytest.raises(ValueError):
            spectrum(sphere2, 3)

    def test_csv(self, sphere1):
        rows = spectrum(sphere1).to_csv().splitlines()
        assert rows[0] == "index,eigenvalue,residual,degree"
        assert len(rows) == 1 + 20
        assert float(rows[1].split(",")[1]) == pytest.approx(-3.0)

    def test_perturbed_spectrum_residuals(self, sphere2):
        H = HamiltonianSpec.cosine_sum([0.1, 0.2, 0.3, 0.4])
        f = constant(sphere2, Target(1), [0.1, 0.2, 0.3, 0.4])
        sp = spectrum(sphere2, H=H, f=f)
        assert sp.residuals.max() < 1e-10


class TestTorusSpectrum:
    @pytest.mark.parametrize("A", FRAMES, ids=["identity", "sheared", "rotated"])
    def test_matches_closed_form(self, A):
        d = build_torus_domain(A, N=8, degree=3)
        w = np.sort(spectrum(d).eigenvalues)
        # oracle: 2 pi |A k| over half-space representatives, 4 per sign
        ks = [k for k in itertools.product(range(-3, 4), repeat=3) if k > (0, 0, 0)]
        lam = [2 * np.pi * np.linalg.norm(A @ np.array(k)) for k in ks]
        expected = np.sort(np.r_[np.zeros(4), np.repeat(lam, 4), -np.repeat(lam, 4)])
        assert np.abs(w - expected).max() <= 1e-10

    @pytest.mark.parametrize(
        "A, k, value",
        [(np.eye(3), (1, 0, 0), 2 * np.pi), (np.eye(3), (1, 1, 0), 2 * np.pi * np.sqrt(2)), (2 * np.eye(3), (1, 0, 0), 4 * np.pi)],
    )
    def test_mode_block_examples(self, A, k, value):
        b = mode_block(build_torus_domain(A, N=4, degree=1), k)
        assert b.closed_form_ev == pytest.approx(value)
        assert b.block.shape == (8, 8)
        ev = np.linalg.eigvalsh(b.block)
        assert np.allclose(ev, np.r_[-np.full(4, value), np.full(4, value)])
        assert b.verified(1e-10)

    def test_mode_block_kernel_and_errors(self, torus6, sphere1):
        b = mode_block(torus6, (0, 0, 0), n=2)
        assert not b.block.any() and b.closed_form_ev == 0.0
        with pytest.raises(ValueError):
            mode_block(sphere1, (1, 0, 0))

    def test_mode_block_matches_galerkin_restriction(self, torus6):
        D = dirac_matrix(torus6, 1)
        j = 5
        idx = np.r_[4 * (1 + 2 * j) : 4 * (1 + 2 * j) + 8]
        assert np.allclose(D[np.ix_(idx, idx)], mode_block(torus6, torus6.modes[j]).block)


class TestLaplace:
    @pytest.mark.parametrize("eigenvalue", [-3.0, 1.0, -4.0])
    def test_identity_on_eigenfunctions(self, sphere2, eigenvalue):
        f = explicit_eigenfields(sphere2)[eigenvalue]
        assert laplace_identity_residual(f) <= 1e-10
        level = eigenvalue**2 + 2 * eigenvalue
        assert np.abs(laplacian_apply(f).coeffs - level * f.coeffs).max() < 1e-10

    @given(st.integers(0, 2**16))
    def test_identity_random(self, sphere3, seed):
        f = random_bandlimited(sphere3, Target(2), 3, 1.0, seed)
        assert laplace_identity_residual(f) <= 1e-10 * (1 + f.norm())

    def test_torus_identity(self):
        f = random_bandlimited(build_torus_domain(FRAMES[1], N=6), Target(1), 2, 1.0, 0)
        assert laplace_identity_residual(f) <= 1e-9

    def test_gap(self, sphere2):
        assert laplace_gap(sphere2) == pytest.approx(3.0)


class TestPoincare:
    def test_sphere(self, sphere2):
        assert poincare_constant(sphere2) == pytest.approx(1.0, rel=1e-12)

    def test_torus(self, torus6):
        assert poincare_constant(torus6) == pytest.approx(1 / (2 * np.pi) ** 2, rel=1e-12)

    @pytest.mark.parametrize("domain", ["sphere2", "torus6"])
    def test_inequality_on_random_fields(self, domain, request):
        d = request.getfixturevalue(domain)
        c0 = poincare_constant(d)
        for seed in range(100):
            f = random_bandlimited(d, Target(1), 2, 1.0, seed)
            c = f.coeffs.copy()
            c[0] = 0
            xi = f.with_coeffs(c)
            assert xi.norm() ** 2 <= c0 * dirac_apply(xi).norm() ** 2 * (1 + 1e-12)


def test_synthesized_eigenfield_from_decomposition(sphere2):
    sp = spectrum(sphere2)
    j = int(np.flatnonzero(np.isclose(sp.eigenvalues, -4))[0])
    phi = sp.eigenfield(j)
    assert np.abs(dirac_apply(phi).coeffs + 4 * phi.coeffs).max() < 1e-10
    assert synthesize(sphere2, Target(1), phi.coeffs).values.shape == phi.values.shape
