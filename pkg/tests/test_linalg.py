import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qref.errors import DimensionError, IndeterminateError, NotPSDError
from qref.linalg import (
    DEFAULT_TOL,
    Subspace,
    Tolerances,
    certificate_gap,
    eigenspace_one,
    lambda_min,
    lmi_simplex_feasible,
    loewner_leq,
    max_entangled,
    meet_all,
    null_space,
    partial_trace,
    span_of_matrices,
    subspace_leq_margin,
    subspace_op,
    support,
    swap_operator,
    tensor,
)
from qref.oracles import grid_feasible, random_effect, random_projector, sample_density

from conftest import KET0, KET1, MINUS, PLUS, proj


def test_tolerances_defaults_and_validation():
    t = Tolerances()
    assert (t.eps_psd, t.eps_rank, t.eps_fix, t.eps_feas) == (1e-9, 1e-8, 1e-10, 1e-7)
    assert (t.max_cut_iters, t.max_fix_iters) == (500, 10000)
    with pytest.raises(ValueError):
        Tolerances(eps_psd=0)


def test_loewner_basic():
    I = np.eye(2)
    assert loewner_leq(0.5 * I, I) == (True, 0.5)
    ok, margin = loewner_leq(I, 0.5 * I)
    assert not ok and margin == pytest.approx(-0.5)
    ok, margin = loewner_leq(proj(PLUS), proj(KET0))
    assert not ok
    with pytest.raises(DimensionError):
        loewner_leq(np.eye(2), np.eye(3))


def test_loewner_tolerance_scales_with_difference():
    Z = np.zeros((2, 2))
    assert loewner_leq(Z, np.diag([1e6, -1e-4]))[0]
    assert not loewner_leq(Z, np.diag([1.0, -1e-4]))[0]
    assert loewner_leq(Z, np.diag([1.0, -1e-10]))[0]


def test_partial_trace_of_product():
    rng = np.random.default_rng(0)
    a, b = sample_density(2, "mixed", rng), sample_density(3, "mixed", rng)
    ab = tensor(a, b)
    assert np.allclose(partial_trace(ab, (2, 3), "first"), b)
    assert np.allclose(partial_trace(ab, (2, 3), "second"), a)


def test_swap_and_max_entangled():
    S = swap_operator(2, 3)
    a, b = np.arange(4).reshape(2, 2), np.arange(9).reshape(3, 3)
    assert np.allclose(S @ np.kron(a, b) @ S.T, np.kron(b, a))
    Om = max_entangled(3)
    assert np.trace(Om) == pytest.approx(1)
    assert np.allclose(Om @ Om, Om)
    assert np.allclose(partial_trace(Om, (3, 3), "first"), np.eye(3) / 3)


def test_support_null_eigenspace():
    A = np.diag([0.0, 0.3, 1.0])
    assert support(A).dim == 2
    assert null_space(A).dim == 1
    assert eigenspace_one(A).dim == 1
    assert np.allclose(eigenspace_one(A).projector(), np.diag([0, 0, 1]))
    with pytest.raises(NotPSDError):
        support(np.diag([-1.0, 1.0]))
    assert support(np.zeros((2, 2))).dim == 0


def test_subspace_lattice_on_qubit():
    Z0, Zp = Subspace.span(KET0.reshape(2, 1), 2), Subspace.span(PLUS.reshape(2, 1), 2)
    assert (Z0 & Zp).dim == 0
    assert (Z0 | Zp).dim == 2
    assert Z0.complement().equals(Subspace.span(KET1.reshape(2, 1), 2))
    assert subspace_op("leq", Z0, Subspace.full(2))
    assert not subspace_op("leq", Zp, Z0)
    assert subspace_leq_margin(Z0, Z0) < 1e-12
    assert subspace_leq_margin(Zp, Z0) == pytest.approx(np.sqrt(0.5))
    assert meet_all([], 3).dim == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_subspace_lattice_laws(seed, d):
    rng = np.random.default_rng(seed)
    A = Subspace.from_projector(random_projector(d, None, rng))
    B = Subspace.from_projector(random_projector(d, None, rng))
    m, j = A & B, A | B
    assert m <= A and m <= B and A <= j and B <= j
    # de Morgan
    assert (A & B).complement().equals(A.complement() | B.complement())
    # dimension formula
    assert m.dim + j.dim == A.dim + B.dim
    assert A.complement().complement().equals(A)


def test_span_of_matrices_rank():
    ops = [proj(KET0), proj(KET1), proj(PLUS), proj(MINUS)]
    assert span_of_matrices(ops).dim == 3
    assert span_of_matrices(ops).contains(np.eye(2).reshape(-1))
    assert span_of_matrices(ops[:2]).dim == 2


# -- LMI over the simplex ---------------------------------------------------------


def test_lmi_endpoint_feasible():
    A = [np.eye(2), 2 * np.eye(2)]
    r = lmi_simplex_feasible(A, 1.5 * np.eye(2))
    assert r.feasible and r.weights[0] >= 0.5 - 1e-9


def test_lmi_needs_interior_mixture():
    # neither vertex fits below B but the midpoint does
    A = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    B = np.diag([0.6, 0.6])
    assert not loewner_leq(A[0], B)[0] and not loewner_leq(A[1], B)[0]
    r = lmi_simplex_feasible(A, B)
    assert r.feasible
    assert np.allclose(r.weights, [0.5, 0.5], atol=0.11)


def test_lmi_infeasible_certificate():
    A = [proj(KET0) / 2, proj(KET1) / 2]
    B = proj(PLUS) / 2
    r = lmi_simplex_feasible(A, B)
    assert not r.feasible
    rho = r.certificate
    assert np.trace(rho).real == pytest.approx(1)
    assert lambda_min(rho) > -1e-12
    assert certificate_gap(rho, A, B) > DEFAULT_TOL.eps_feas / 2


def test_lmi_above_direction():
    A = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    assert lmi_simplex_feasible(A, np.diag([0.4, 0.4]), "above").feasible
    r = lmi_simplex_feasible(A, np.diag([0.6, 0.6]), "above")
    assert not r.feasible
    assert certificate_gap(r.certificate, A, np.diag([0.6, 0.6]), "above") > 0


def test_lmi_budget_exhaustion_is_indeterminate():
    # optimum exactly on the boundary at an interior, non-centroid mixture
    rng = np.random.default_rng(3)
    A = [random_effect(4, rng) for _ in range(3)]
    B = 0.2 * A[0] + 0.3 * A[1] + 0.5 * A[2]
    with pytest.raises(IndeterminateError) as info:
        lmi_simplex_feasible(A, B, tol=Tolerances(max_cut_iters=2, eps_feas=1e-15))
    assert info.value.lower <= 0 <= info.value.upper


def test_lmi_agrees_with_grid_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 4))
        A = [random_effect(3, rng) for _ in range(n)]
        B = random_effect(3, rng)
        for direction in ("below", "above"):
            r = lmi_simplex_feasible(A, B, direction)
            assert r.feasible == grid_feasible(A, B, direction, 1e-3), (direction, r.bound)
