"""End-to-end acceptance checks; each prints one PASS/FAIL line with its runtime."""

import itertools
import time
from contextlib import contextmanager

import numpy as np
import pytest

from hkfloer import cli
from hkfloer.action import action_gradient, apriori_bound_check, energy, energy_identity_residual, perturbed_action
from hkfloer.dirac import dirac_apply, hessian_galerkin, operator_matrix, spectrum
from hkfloer.domain import build_sphere_domain, build_torus_domain, conjugate_hopf_map, verify_hypercontact
from hkfloer.dynamics import adiabatic_experiment, connect_orbit_bvp, monitor_apriori, sphere_slice_check
from hkfloer.dynamics.bvp import decay_rate, endpoint_gaps
from hkfloer.dynamics.morse import separable_critical_points
from hkfloer.field import Target, constant, inner, quaternion_field, random_bandlimited
from hkfloer.floer import admissible_family, build_complex, homology, two_well_factor, verify_boundary_squared
from hkfloer.hamiltonian import HamiltonianSpec, TrigTerm
from hkfloer.quat import UNITS, qconj
from hkfloer.specflow import OperatorFamily, floer_index_report, loop_flow_check

pytestmark = pytest.mark.acceptance

H_T4 = HamiltonianSpec.cosine_sum([0.02, 0.021, 0.022, 0.023])
EPS = 0.1
PAIR = ([0.5, 0.5, 0.5, 0.5], [0.0, 0.5, 0.5, 0.5])
BETTI = [1, 4, 6, 4, 1]
FRAMES = [
    np.eye(3),
    np.array([[1.0, 0.3, 0.0], [0.0, 1.2, -0.4], [0.2, 0.0, 0.9]]),
    np.array([[0.7, -0.5, 0.1], [0.4, 0.8, 0.3], [-0.2, 0.1, 1.1]]),
]


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(number, title, budget):
        facts = {}
        t0 = time.perf_counter()
        ok = False
        try:
            yield facts
            ok = True
        finally:
            elapsed = time.perf_counter() - t0
            in_time = budget is None or elapsed < budget
            status = "PASS" if ok and in_time else "FAIL"
            limit = "" if budget is None else f" / {budget:.0f}s"
            detail = ", ".join(f"{k}={v}" for k, v in facts.items())
            with capsys.disabled():
                print(f"\n[criterion {number}] {status} {title} ({elapsed:.1f}s{limit}) {detail}")
        assert in_time, f"criterion {number} took {elapsed:.1f}s, budget {budget}s"

    return run


def _fmt(x):
    return f"{x:.2e}"


def test_criterion_1_hypercontact(criterion):
    with criterion(1, "hypercontact identities on S^3", 5) as facts:
        rep = verify_hypercontact(build_sphere_domain(2))
        facts["kappa"] = rep.kappa
        facts["max_violation"] = _fmt(rep.max_violation())
        assert rep.kappa == 2.0
        for name in ("duality", "dalpha_kappa", "mu", "hodge", "lie_bracket"):
            assert getattr(rep, name) <= 1e-12, name
        assert rep.max_violation() <= 1e-12


def test_criterion_2_dirac_spectra(criterion):
    with criterion(2, "Dirac spectra on S^3 and T^3", 60) as facts:
        d = build_sphere_domain(2)
        sp = spectrum(d, 2)
        for v in (-4.0, -3.0, 0.0, 1.0):
            assert sp.contains(v, 1e-8), v
        fields = {
            -3.0: quaternion_field(d, lambda y: y),
            1.0: quaternion_field(d, lambda y: y + 2 * qconj(y)),
            -4.0: quaternion_field(d, lambda y: conjugate_hopf_map(UNITS[0], y)),
        }
        worst = 0.0
        for lam, f in fields.items():
            Df = dirac_apply(f)
            worst = max(worst, np.linalg.norm(Df.coeffs - lam * f.coeffs) / np.linalg.norm(f.coeffs))
        facts["eigenfunction_residual"] = _fmt(worst)
        assert worst <= 1e-8
        w = sp.eigenvalues
        levels = np.array([k * (k + 2) for k in range(3)], dtype=float)
        rel = np.abs((w**2 + 2 * w)[:, None] - levels[None, :]).min(axis=1).max()
        facts["degree_relation"] = _fmt(rel)
        assert rel <= 1e-8

        gap = 0.0
        ks = [k for k in itertools.product(range(-3, 4), repeat=3) if k > (0, 0, 0)]
        for A in FRAMES:
            got = np.sort(spectrum(build_torus_domain(A, N=8, degree=3)).eigenvalues)
            lam = [2 * np.pi * np.linalg.norm(A @ np.array(k)) for k in ks]
            expected = np.sort(np.r_[np.zeros(4), np.repeat(lam, 4), -np.repeat(lam, 4)])
            gap = max(gap, np.abs(got - expected).max())
        facts["torus_defect"] = _fmt(gap)
        assert gap <= 1e-10


def _random_h(rng):
    terms = []
    for _ in range(3):
        freq = tuple(int(v) for v in rng.integers(-1, 2, size=4))
        w = tuple(float(v) for v in rng.integers(-1, 2, size=4))
        terms.append(TrigTerm(freq, float(rng.uniform(-0.1, 0.1)), float(rng.uniform(0, 6)), w))
    return HamiltonianSpec(4, tuple(terms))


def test_criterion_3_action_energy(criterion):
    with criterion(3, "action and energy identities", 60) as facts:
        d = build_sphere_domain(2)
        h1 = Target(1)
        ident = fd = sym = 0.0
        for seed in range(100):
            f = random_bandlimited(d, h1, 2, 1.0, seed)
            ident = max(ident, energy_identity_residual(f) / energy(f))
            assert apriori_bound_check(f).holds, seed
        for seed in range(20):
            rng = np.random.default_rng(seed)
            H = _random_h(rng)
            f = random_bandlimited(d, h1, 2, 0.5, 1000 + seed)
            xi = random_bandlimited(d, h1, 2, 0.5, 2000 + seed)
            xi = (1 / xi.norm()) * xi
            t = 1e-4
            diff = (perturbed_action(f + t * xi, H) - perturbed_action(f - t * xi, H)) / (2 * t)
            fd = max(fd, abs(diff - inner(xi, action_gradient(f, H))))
            M = hessian_galerkin(d, H, f)
            sym = max(sym, np.abs(M - M.T).max())
        facts["identity"] = _fmt(ident)
        facts["fd_gradient"] = _fmt(fd)
        facts["hessian_asym"] = _fmt(sym)
        assert ident <= 1e-8
        assert fd <= 1e-7
        assert sym <= 1e-10


def test_criterion_4_index(criterion):
    with criterion(4, "Floer index of constant critical points", 120) as facts:
        d = build_torus_domain(N=6, degree=2)
        pts = separable_critical_points(H_T4)
        reps = [floer_index_report(x, H_T4.scaled(EPS), d, degrees=(1, 2)) for x, _ in pts]
        facts["points"] = len(reps)
        assert len(reps) == 16
        assert all(r.stable and r.agrees for r in reps)
        assert all(r.mu == 4 - r.morse_index for r in reps)

        s1 = build_sphere_domain(1)
        Hs = HamiltonianSpec.cosine_sum([0.3, 0.2, 0.1, 0.4])
        M0 = operator_matrix(s1, 1, H=H_T4, f=constant(s1, Target(1), [0.5] * 4)) + 0.3 * np.eye(20)
        f0 = random_bandlimited(s1, Target(1), 1, 0.3, 2)
        c = np.array([0.3, -0.2, 0.5, 0.1])

        def translates(t):
            ft = f0 + constant(s1, Target(1), np.sin(2 * np.pi * t) * c)
            return operator_matrix(s1, 1, H=Hs, f=ft) + 0.25 * np.eye(20)

        g = constant(d, Target(1), [0.5, 0.5, 0.0, 0.0])

        def deformation(t):
            Ht = H_T4.plus(TrigTerm((1, 0, 0, 0), 2.0 * np.sin(np.pi * t) ** 2, 0.3, (1, 0, 0)))
            return operator_matrix(d, 1, degree=1, H=Ht, f=g) + 0.1 * np.eye(4 * 27)

        flows = [
            loop_flow_check(OperatorFamily(lambda t: M0)),
            loop_flow_check(OperatorFamily(translates, grid=np.linspace(0, 1, 33)), closure_tol=1e-9),
            loop_flow_check(OperatorFamily(deformation, grid=np.linspace(0, 1, 41)), blockwise=False),
        ]
        facts["loop_flows"] = flows
        assert flows == [0, 0, 0]


def test_criterion_5_floer_complex(criterion):
    with criterion(5, "Floer complex and homology on T^4", 300) as facts:
        d = build_torus_domain(N=6, degree=2)
        perfect = build_complex(H_T4, EPS, d=d)
        assert perfect.total == 16
        assert perfect.multiplicities == BETTI
        assert perfect.is_zero
        assert homology(perfect) == BETTI

        wells = build_complex(two_well_factor(), EPS, d=d)
        facts["two_well"] = wells.multiplicities
        assert wells.total == 32
        assert verify_boundary_squared(wells)
        assert homology(wells) == BETTI

        family = admissible_family(20, seed=7)
        counts = []
        for H in family:
            cx = build_complex(H, EPS, d=d)
            counts.append(cx.total)
            assert verify_boundary_squared(cx)
            assert homology(cx) == BETTI
        facts["family_generators"] = f"{min(counts)}..{max(counts)}"
        assert len(counts) >= 20 and min(counts) >= 16


def test_criterion_6_adiabatic(criterion):
    with criterion(6, "adiabatic limit for an index-1 pair", 600) as facts:
        d = build_torus_domain(N=6, degree=2)
        rep = adiabatic_experiment(H_T4, [0.2, 0.1, 0.05], PAIR, d, Target(1, 1.0), degree=1, h=0.2)
        facts["oscillation"] = _fmt(max(rep.oscillation))
        facts["ratios"] = [round(r, 3) for r in rep.ratios]
        facts["energy"] = _fmt(max(rep.energy_errors))
        dev = max(abs(r - g) / g for rr, gg in zip(rep.decay, rep.gaps) for r, g in zip(rr, gg))
        facts["decay_dev"] = f"{dev:.3f}"
        assert max(rep.oscillation) <= 1e-8
        assert all(abs(r - 1) <= 0.25 for r in rep.ratios)
        assert max(rep.energy_errors) <= 1e-6
        assert dev <= 0.1


def test_criterion_7_monitors(criterion):
    with criterion(7, "a-priori monitors and sphere slices", 120) as facts:
        d = build_torus_domain(N=6, degree=2)
        worst_ddu = worst_dudsu = 0.0
        for eps in (0.2, 0.1, 0.05):
            sol = connect_orbit_bvp(*map(np.array, PAIR), H_T4, eps, d=d, target=Target(1, 1.0), degree=1)
            assert sol.residual <= 1e-8
            rep = monitor_apriori(sol)
            assert rep["ddu"]["holds"] and rep["ddu"]["windows"] > 0
            assert rep["dudsu"]["holds"]
            worst_ddu = max(worst_ddu, rep["ddu"]["worst_ratio"])
            worst_dudsu = max(worst_dudsu, rep["dudsu"]["worst_ratio"])
        facts["ddu_ratio"] = f"{worst_ddu:.3f}"
        facts["dudsu_ratio"] = f"{worst_dudsu:.3f}"

        s2 = build_sphere_domain(2)
        radial = 0.0
        for seed in range(100):
            rep = sphere_slice_check(random_bandlimited(s2, Target(1), 2, 1.0, seed), r=0.7)
            assert rep.isoperimetric, seed
            radial = max(radial, rep.radial_residual)
        facts["radial"] = _fmt(radial)
        assert radial <= 1e-8


def _suite(base):
    for cmd in cli.COMMANDS:
        assert cli.main([cmd, "--out", str(base / cmd)]) == 0, cmd
    return {cmd: (base / cmd / "summary.json").read_bytes() for cmd in cli.COMMANDS}


def test_criterion_8_determinism(criterion, tmp_path):
    with criterion(8, "byte-identical summaries across two suite runs", None) as facts:
        first = _suite(tmp_path)
        second = _suite(tmp_path)
        same = [cmd for cmd in cli.COMMANDS if first[cmd] == second[cmd]]
        facts["identical"] = f"{len(same)}/{len(cli.COMMANDS)}"
        assert len(same) == len(cli.COMMANDS)
