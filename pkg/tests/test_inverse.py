import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraccal.errors import (AbsorptionViolated, DeltaTooLarge, IllConditionedM, NoConvergence,
                            PartitionNotAligned)
from fraccal.forward import (Potential, cauchy_alessandrini, dirichlet_spectrum, dtn_difference,
                             dtn_matrix, kernel_spaces, solve_forward, solve_forward_kernel)
from fraccal.fracgrid import assemble_operator, build_lattice
from fraccal.inverse import (choose_test_pairs, instability_experiment, lipschitz_estimate,
                             make_basis, reconstruct_cauchy, reconstruct_fixed_point,
                             reconstruct_oracle)
from oracles import compensated_inner, gram_identity_error, nodal_affine_gram

A_TRUE = np.array([0.3, -0.2, 0.1, 0.0])


@pytest.fixture(scope="module")
def std():
    op = assemble_operator(build_lattice((-1, 1), [(-3, -2), (2, 3)], 0.02), 0.5)
    span = make_basis(op.lattice, "piecewise_constant", 4)
    return op, span, choose_test_pairs(span, 0.5, op)


@pytest.fixture(scope="module")
def op60():
    return assemble_operator(build_lattice((-1, 1), [(-3, -2), (2, 3)], 1 / 60), 0.5)


def dtn_oracle(op, q1):
    L = dtn_matrix(op, q1, 0, 1).entries
    return lambda f: L @ f


def kernel_potential(op):
    lam = dirichlet_spectrum(op, Potential.zero(op)).lambda_1
    return Potential.constant(op, -lam)


# bases

def test_basis_single_cell(std):
    op = std[0]
    span = make_basis(op.lattice, "piecewise_constant", 1)
    n = len(op.lattice.omega_loc)
    np.testing.assert_allclose(span.g[0], 1 / np.sqrt(op.h * n), rtol=1e-14)


def test_basis_four_cells(std):
    op, span, _ = std
    assert span.m == 4
    assert np.all(np.sum(span.g != 0, axis=0) == 1)
    assert gram_identity_error(op.h, span.g) <= 1e-12
    np.testing.assert_allclose([hi - lo for lo, hi in span.partition], 0.5)


def test_basis_affine_against_nodal_gram(std):
    op = std[0]
    span = make_basis(op.lattice, "piecewise_affine", 2)
    assert span.m == 4
    assert gram_identity_error(op.h, span.g) <= 1e-10
    x = op.lattice.x[op.lattice.omega_loc]
    G_raw, rows = nodal_affine_gram(op.h, list(x), [-1.0, 0.0, 1.0])
    C = op.h * np.array(rows) @ span.g.T  # raw rows in the orthonormal basis
    np.testing.assert_allclose(C @ C.T, G_raw, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(C @ span.g, rows, rtol=0, atol=1e-12)


def test_basis_trig_and_errors(std):
    op = std[0]
    span = make_basis(op.lattice, "trigonometric", 5)
    assert span.m == 5 and gram_identity_error(op.h, span.g) <= 1e-10
    with pytest.raises(PartitionNotAligned):
        make_basis(op.lattice, "piecewise_constant", 3)
    loose = make_basis(op.lattice, "piecewise_constant", 3, strict=False)
    assert gram_identity_error(op.h, loose.g) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["piecewise_constant", "piecewise_affine", "trigonometric"]),
       st.integers(1, 10))
def test_basis_orthonormal_property(std, kind, N):
    lat = std[0].lattice
    span = make_basis(lat, kind, N, strict=False)
    assert gram_identity_error(lat.h, span.g) <= 1e-10
    a = np.linspace(-1, 1, span.m)
    np.testing.assert_allclose(span.coefficients(span.potential(a).values), a, atol=1e-12)


# test pairs

def test_pairs_s_below_half(std):
    op, span, _ = std
    p = choose_test_pairs(span, 0.3, op)
    assert np.count_nonzero(p.M - np.diag(np.diag(p.M))) == 0
    assert p.condM == pytest.approx(1.0, abs=1e-12) and p.width == 1


def test_pairs_s_above_half_diag_dominant(std):
    op, span, _ = std
    op7 = assemble_operator(op.lattice, 0.7)
    p = choose_test_pairs(span, 0.7, op7, width=2)
    off = np.sum(np.abs(p.M), axis=1) - np.abs(np.diag(p.M))
    assert np.all(np.abs(np.diag(p.M)) > off) and p.width == 2


def test_pairs_trig_quadrature(std):
    op = std[0]
    span = make_basis(op.lattice, "trigonometric", 5)
    p = choose_test_pairs(span, 0.5, op)
    ref = np.array([[compensated_inner(op.h, g, p.h1[l] * p.h2[l]) for g in span.g]
                    for l in range(span.m)])
    assert np.max(np.abs(p.M - ref)) <= 1e-10
    assert np.isfinite(p.condM) and abs(np.linalg.det(p.M)) > 0


def test_pairs_constants(std):
    op, span, p = std
    G = op.hs_gram("omega")
    hs = [np.sqrt(a @ G @ a) * np.sqrt(b @ G @ b) for a, b in zip(p.h1, p.h2)]
    assert p.L0 == pytest.approx(max(hs), rel=1e-12)
    with pytest.raises(IllConditionedM):
        choose_test_pairs(span, 0.5, op, ceiling=0.5)


# oracle reconstruction

def test_oracle_equal_potentials(std):
    op, span, pairs = std
    q = span.potential(A_TRUE)
    r = reconstruct_oracle(op, q, q, span, pairs, 1e-3, policy="floor")
    assert np.max(np.abs(r.a_hat)) <= 1e-9
    assert np.max(np.abs(r.M @ r.a_hat - r.rhs)) <= 1e-12 * max(np.abs(r.rhs).max(), 1e-300)


def test_oracle_strict_policy_unreachable(std):
    from fraccal.errors import TargetUnreachable
    op, span, pairs = std
    with pytest.raises(TargetUnreachable):
        reconstruct_oracle(op, span.potential(A_TRUE), Potential.zero(op), span, pairs, 1e-3)


def test_oracle_absorption(std):
    op, span, pairs = std
    with pytest.raises(AbsorptionViolated):
        reconstruct_oracle(op, Potential.zero(op), Potential.zero(op), span, pairs, 0.2)


def test_oracle_scaling_and_consistency(std):
    op, span, pairs = std
    q2 = Potential.zero(op)
    r1 = reconstruct_oracle(op, span.potential(A_TRUE), q2, span, pairs, 1e-3, policy="floor")
    r2 = reconstruct_oracle(op, span.potential(2 * A_TRUE), q2, span, pairs, 1e-3,
                            policy="floor")
    assert np.max(np.abs(r2.a_hat - 2 * r1.a_hat)) <= 0.05 * np.max(np.abs(2 * r1.a_hat))
    bound = 2 * pairs.condM * r1.eps_achieved * pairs.L0 * np.max(np.abs(A_TRUE))
    assert np.max(np.abs(r1.a_hat - A_TRUE)) <= bound
    assert r1.residual_bound == pytest.approx(pairs.condM * r1.eps_achieved * pairs.L0)


def test_oracle_exchange_symmetry(std):
    op, span, pairs = std
    q1, q2 = span.potential(A_TRUE), Potential.zero(op)
    a = reconstruct_oracle(op, q1, q2, span, pairs, 1e-3, policy="floor")
    b = reconstruct_oracle(op, q1, q2, span, pairs, 1e-3, policy="floor", windows=(1, 0))
    assert np.max(np.abs(a.a_hat - b.a_hat)) <= 10 * a.residual_bound


def fixed_control_rhs(op, span, controls, scale):
    lat = op.lattice
    D = dtn_difference(op, span.potential(scale * A_TRUE), Potential.zero(op), 0, 1)
    return np.array([op.h * lat.restrict(c2.f, 1) @ D @ lat.restrict(c1.f, 0)
                     for c1, c2 in controls])


def collinearity_defect(std, amp):
    op, span, pairs = std
    r = reconstruct_oracle(op, span.potential(A_TRUE), Potential.zero(op), span, pairs, 1e-3,
                           policy="floor")
    B = [fixed_control_rhs(op, span, r.controls, t * amp) for t in (1, 2, 3)]
    return np.linalg.norm(B[2] - 2 * B[1] + B[0]) / np.linalg.norm(B[1])


def test_measurement_map_second_order(std):
    d1, d2 = collinearity_defect(std, 0.2), collinearity_defect(std, 0.1)
    assert 0.4 < d2 / d1 < 0.6


@pytest.mark.xfail(strict=True, reason="Lambda_q is nonlinear in q; b is affine only to first order")
def test_measurement_map_affine(std):
    assert collinearity_defect(std, 1.0) <= 1e-8


@pytest.mark.xfail(strict=True, reason="control error floor at h=0.02 limits recovery to about 27%")
def test_oracle_planted_recovery(std):
    op, span, pairs = std
    r = reconstruct_oracle(op, span.potential(A_TRUE), Potential.zero(op), span, pairs, 1e-3,
                           policy="floor")
    assert r.error(A_TRUE) <= 1e-2


# fixed point

def test_fixed_point_trivial(std):
    op, span, pairs = std
    q2 = Potential.zero(op)
    r = reconstruct_fixed_point(op, dtn_oracle(op, q2), q2, span, pairs, 1e-3, policy="floor")
    assert len(r.iterations) == 2 and not np.any(r.a_hat) and r.converged


def small_planted(span, sup=0.1):
    return A_TRUE * sup / np.max(np.abs(span.potential(A_TRUE).values))


def test_fixed_point_converges_small(std):
    op, span, pairs = std
    a = small_planted(span)
    q2 = Potential.zero(op)
    r = reconstruct_fixed_point(op, dtn_oracle(op, span.potential(a)), q2, span, pairs, 1e-3,
                                policy="floor")
    assert r.converged and np.max(np.abs(r.iterations[-1] - r.iterations[-2])) <= 1e-8


def test_fixed_point_reports_trace(std):
    op, span, pairs = std
    a = small_planted(span)
    with pytest.raises(NoConvergence) as info:
        reconstruct_fixed_point(op, dtn_oracle(op, span.potential(a)), Potential.zero(op),
                                span, pairs, 1e-3, max_iter=2, policy="floor")
    res = info.value.result
    assert not res.converged and len(res.iterations) == 3


@pytest.mark.xfail(strict=True, reason="control error floor keeps the fixed point near 50% error")
def test_fixed_point_planted_recovery(std):
    op, span, pairs = std
    a = small_planted(span)
    r = reconstruct_fixed_point(op, dtn_oracle(op, span.potential(a)), Potential.zero(op),
                                span, pairs, 1e-3, policy="floor")
    assert r.error(a) <= 1e-2


# Cauchy data

def test_cauchy_equal_potentials(std):
    op, span, pairs = std
    q = kernel_potential(op)
    r = reconstruct_cauchy(op, q, q, span, pairs, 1e-3, policy="floor", floor_alpha=1e-3)
    assert np.max(np.abs(r.a_hat)) <= 1e-8


def kernel_solution(op, q, ks, rng, k):
    lat = op.lattice
    B = ks.h1_basis(k)
    f = lat.extend(B @ rng.standard_normal(B.shape[1]), k)
    u = solve_forward_kernel(op, q, ks, f)
    if ks.dim:
        u[lat.omega_loc] += ks.Z2 @ rng.standard_normal(ks.dim)
    return u


def test_cauchy_alessandrini_kernel_draws(std, rng):
    op = std[0]
    q2 = kernel_potential(op)
    ks2 = kernel_spaces(op, q2)
    n = len(op.lattice.omega_loc)
    om = op.lattice.omega_loc
    for _ in range(20):
        q1 = Potential(q2.values + 0.1 * rng.uniform(-1, 1, n))
        ks1 = kernel_spaces(op, q1)
        u1 = kernel_solution(op, q1, ks1, rng, 0)
        u2 = kernel_solution(op, q2, ks2, rng, 1)
        v2 = kernel_solution(op, q2, ks2, rng, 0)
        lhs = op.h * np.sum((q1.values - q2.values) * u1[om] * u2[om])
        rhs = cauchy_alessandrini(op, u1, u2, v2, (0, 1))
        assert abs(lhs - rhs) <= 1e-9 * abs(lhs)


def test_cauchy_alessandrini_plain(op_two, rng):
    lat = op_two.lattice
    n = len(lat.omega_loc)
    q1, q2 = Potential(rng.uniform(-1, 1, n)), Potential(rng.uniform(-1, 1, n))
    f = lambda k: lat.extend(rng.standard_normal(len(lat.loc(k))), k)
    u1, u2, v2 = solve_forward(op_two, q1, f(0)), solve_forward(op_two, q2, f(1)), \
        solve_forward(op_two, q2, f(0))
    om = lat.omega_loc
    lhs = op_two.h * np.sum((q1.values - q2.values) * u1[om] * u2[om])
    assert cauchy_alessandrini(op_two, u1, u2, v2, (0, 1)) == pytest.approx(lhs, rel=1e-9)


@pytest.mark.xfail(strict=True, reason="best Cauchy-path recovery at h=0.02 is about 40%")
def test_cauchy_planted_recovery(std):
    op, span, pairs = std
    q2 = kernel_potential(op)
    a = 0.05 * A_TRUE
    r = reconstruct_cauchy(op, span.potential(a, base=q2), q2, span, pairs, 1e-3,
                           policy="floor")
    assert r.error(a) <= 5e-2


# Lipschitz and instability

def test_lipschitz_definition(std):
    op = std[0]
    span = make_basis(op.lattice, "piecewise_constant", 2)
    r = lipschitz_estimate(op, span, 10, seed=4)
    assert np.isfinite(r.C_emp) and r.C_emp == r.ratios.max() > 0
    again = lipschitz_estimate(op, span, 10, seed=4)
    assert np.array_equal(r.ratios, again.ratios) and r.sigma_min == again.sigma_min


def test_lipschitz_sigma_min_decreasing(op60):
    sig = [lipschitz_estimate(op60, make_basis(op60.lattice, "piecewise_constant", N), 2,
                              seed=0).sigma_min for N in (2, 6, 10)]
    assert sig[0] > sig[1] > sig[2] > 0


@pytest.mark.xfail(strict=True, reason="max over 20 random pairs converges slowly; seeds differ ~19%")
def test_lipschitz_seed_stability(std):
    op = std[0]
    span = make_basis(op.lattice, "piecewise_constant", 1)
    a, b = (lipschitz_estimate(op, span, 20, seed=s).C_emp for s in (0, 1))
    assert abs(a - b) <= 0.1 * min(a, b)


def test_instability_single_cell(std):
    op = std[0]
    r = instability_experiment(op, 1, 0.1, 500, seed=0, sampler="uniform")
    assert r.sample_pairs == 3 and r.min_ratio > 0
    r2 = instability_experiment(op, 1, 0.1, 500, seed=0)
    assert r2.min_ratio > 0


@pytest.mark.parametrize("sampler", ["uniform", "screened"])
def test_instability_min_nonincreasing(std, sampler):
    op = std[0]
    small = instability_experiment(op, 4, 0.1, 20, seed=3, sampler=sampler)
    large = instability_experiment(op, 4, 0.1, 60, seed=3, sampler=sampler)
    np.testing.assert_array_equal(large.ratios[:20], small.ratios)
    assert large.min_ratio <= small.min_ratio
    assert np.all(np.diff(large.prefix_min) <= 0)


def test_instability_delta_bound(std):
    op = std[0]
    lam = dirichlet_spectrum(op, Potential.zero(op)).lambda_1
    with pytest.raises(DeltaTooLarge):
        instability_experiment(op, 2, lam, 10, seed=0)
    instability_experiment(op, 2, 0.5 * lam, 10, seed=0)
