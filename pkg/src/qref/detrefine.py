"""Refinement of deterministic programs and their predicate transformers.

Effect-based refinement reduces to the approximation order on Choi
matrices (total) or its reverse (partial).  Projector-based refinement
reduces to inclusions between spans of Kraus operators, after restricting
to the termination space for the total variant.

Programs and predicates must live on the same declared space; use
:func:`embed` to extend a predicate by idle factors and
:func:`qref.programs.tensor_extend` for programs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from qref.errors import ContractError, DimensionError
from qref.linalg import (
    DEFAULT_TOL,
    Subspace,
    Tolerances,
    as_subspace,
    eigenspace_one,
    herm,
    loewner_leq,
    max_entangled,
    null_space,
    span_of_matrices,
    subspace_leq_margin,
    subspace_op,
    support,
)
from qref.programs import Superoperator, adjoint, apply, compose, cp_order, tensor_extend

ORDER_TAGS = {
    ("effect", "total"): "tot-e",
    ("effect", "partial"): "par-e",
    ("proj", "total"): "tot-p",
    ("proj", "partial"): "par-p",
    ("set", "total"): "tot-s",
    ("set", "partial"): "par-s",
}


@dataclass
class Specification:
    """A pre/postcondition pair of one predicate flavor on a declared space."""

    flavor: str  # effect | projector | effect_set
    pre: Any
    post: Any
    dim: int
    kind: str = "total"
    violation: float = 0.0  # how far the refuted program misses the specification

    def to_json(self) -> dict:
        from qref import serialize

        return serialize.spec_to_json(self)


@dataclass
class RefinementVerdict:
    holds: bool
    order: str
    margin: float
    witness: Any = None
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.holds

    def to_json(self) -> dict:
        from qref import serialize

        return serialize.verdict_to_json(self)


def _check_dims(E: Superoperator, A) -> None:
    n = A.ambient_dim if isinstance(A, Subspace) else np.asarray(A).shape[0]
    if n != E.dim:
        raise DimensionError(f"program acts on {E.dim}, predicate lives on {n}")


def _kind(kind: str) -> str:
    if kind not in ("total", "partial"):
        raise ValueError(f"kind must be 'total' or 'partial', not {kind!r}")
    return kind


# -- effect transformers -------------------------------------------------------


def wp_effect(E: Superoperator, N) -> np.ndarray:
    """Weakest precondition ``E^dag(N)``."""
    N = herm(N)
    _check_dims(E, N)
    return herm(apply(adjoint(E), N))


def wlp_effect(E: Superoperator, N) -> np.ndarray:
    """Weakest liberal precondition ``I - E^dag(I - N)``."""
    N = herm(N)
    _check_dims(E, N)
    I = np.eye(E.dim)
    return herm(I - apply(adjoint(E), I - N))


def sat_total_effect(E: Superoperator, M, N, tol: Tolerances = DEFAULT_TOL) -> bool:
    _check_dims(E, M)
    return loewner_leq(M, wp_effect(E, N), tol)[0]


def sat_partial_effect(E: Superoperator, M, N, tol: Tolerances = DEFAULT_TOL) -> bool:
    _check_dims(E, M)
    return loewner_leq(M, wlp_effect(E, N), tol)[0]


def sat_effect(kind: str, E: Superoperator, M, N, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, float]:
    """Satisfaction verdict and margin ``lambda_min(xp(E, N) - M)``."""
    xp = wp_effect if _kind(kind) == "total" else wlp_effect
    _check_dims(E, M)
    return loewner_leq(M, xp(E, N), tol)


def embed(pred, left_extra: int = 1, right_extra: int = 1):
    """Extend a predicate to ``I_left (x) pred (x) I_right``.

    Subspaces are extended the same way (tensored with the full space).
    """
    if isinstance(pred, Subspace):
        return Subspace.full(left_extra).tensor(pred).tensor(Subspace.full(right_extra))
    return np.kron(np.kron(np.eye(left_extra), herm(pred)), np.eye(right_extra))


def doubled(E: Superoperator) -> Superoperator:
    """``E (x) id`` on the system plus a reference copy (reference on the right)."""
    return tensor_extend(E, E.dim, "right")


# -- effect refinement ---------------------------------------------------------


def witness_spec(kind: str, E: Superoperator, F: Superoperator, tol: Tolerances = DEFAULT_TOL) -> Specification:
    """Single specification on the doubled space satisfied by ``E`` but not by ``F``.

    Total: ``(wp.E.Omega, Omega)``.  Partial: ``(wlp.E.(I - Omega), I - Omega)``.
    Raises :class:`ContractError` when ``F`` does refine ``E``.
    """
    _kind(kind)
    spec = single_formula_spec(kind, E)
    EE, FF = doubled(E), doubled(F)
    ok_E, _ = sat_effect(kind, EE, spec.pre, spec.post, tol)
    ok_F, margin_F = sat_effect(kind, FF, spec.pre, spec.post, tol)
    if ok_F:
        raise ContractError(f"no witness: the {kind} refinement holds")
    if not ok_E:
        raise ContractError("internal error: witness not satisfied by the refined program")
    spec.violation = -margin_F
    return spec


def single_formula_spec(kind: str, E: Superoperator) -> Specification:
    d = E.dim
    Omega = max_entangled(d)
    EE = doubled(E)
    if _kind(kind) == "total":
        return Specification("effect", wp_effect(EE, Omega), Omega, d * d, "total")
    post = np.eye(d * d) - Omega
    return Specification("effect", wlp_effect(EE, post), post, d * d, "partial")


def refines_effect(kind: str, E: Superoperator, F: Superoperator, tol: Tolerances = DEFAULT_TOL) -> RefinementVerdict:
    """``E <=_T^e F`` iff ``E <= F``; ``E <=_P^e F`` iff ``F <= E`` (CP order)."""
    if E.dim != F.dim:
        raise DimensionError(f"programs act on {E.dim} and {F.dim}")
    if _kind(kind) == "total":
        holds, margin = cp_order(E, F, tol)
    else:
        holds, margin = cp_order(F, E, tol)
    verdict = RefinementVerdict(holds, ORDER_TAGS["effect", kind], margin)
    if not holds:
        verdict.witness = witness_spec(kind, E, F, tol)
    return verdict


# -- projector transformers ----------------------------------------------------


def wp_proj(E: Superoperator, Q, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """``E(E^dag(Q))``: eigenvalue-1 eigenspace of ``E^dag(Q)``."""
    Q = as_subspace(Q, tol)
    _check_dims(E, Q)
    return eigenspace_one(apply(adjoint(E), Q.projector()), tol)


def wlp_proj(E: Superoperator, Q, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Null space of ``E^dag(Q^perp)``."""
    Q = as_subspace(Q, tol)
    _check_dims(E, Q)
    Qperp = np.eye(E.dim) - Q.projector()
    return null_space(apply(adjoint(E), Qperp), tol)


def sp_proj(E: Superoperator, Q, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Support of ``E(Q)``."""
    Q = as_subspace(Q, tol)
    _check_dims(E, Q)
    return support(apply(E, Q.projector()), tol)


def termination_space(E: Superoperator, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    return eigenspace_one(apply(adjoint(E), np.eye(E.dim)), tol)


def sat_proj(kind: str, E: Superoperator, P, Q, tol: Tolerances = DEFAULT_TOL) -> bool:
    """``E |= (P, Q)`` for projector predicates: ``P <= wp^p.E.Q`` (or ``wlp^p``)."""
    P = as_subspace(P, tol)
    xp = wp_proj if _kind(kind) == "total" else wlp_proj
    return subspace_op("leq", P, xp(E, Q, tol), tol)


def _restrict(E: Superoperator, T: Subspace) -> Superoperator:
    return compose(Superoperator([T.projector()]), E)


def _span(E: Superoperator, tol: Tolerances) -> Subspace:
    return span_of_matrices(E.kraus, tol)


def proj_witness(kind: str, E: Superoperator, F: Superoperator, tol: Tolerances = DEFAULT_TOL) -> Specification:
    """Projector specification on the doubled space satisfied by ``E``, violated by ``F``.

    Partial: ``(Omega, supp J(E))``.  Total: ``(T_E, I)`` if ``T_E`` is not
    inside ``T_F``, otherwise ``(phi, supp((E (x) id)(phi)))`` with
    ``phi = (P_{T_E} (x) I)|w>``.
    """
    d = E.dim
    EE, FF = doubled(E), doubled(F)
    if _kind(kind) == "partial":
        pre = support(max_entangled(d), tol)
        post = sp_proj(EE, pre, tol)
    else:
        TE, TF = termination_space(E, tol), termination_space(F, tol)
        if not subspace_op("leq", TE, TF, tol):
            pre, post = embed(TE, 1, d), Subspace.full(d * d)
        else:
            w = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
            phi = np.kron(TE.projector(), np.eye(d)) @ w
            pre = Subspace.span(phi.reshape(-1, 1), d * d, tol)
            post = sp_proj(EE, pre, tol)
    spec = Specification("projector", pre, post, d * d, kind)
    if not sat_proj(kind, EE, pre, post, tol):
        raise ContractError("internal error: projector witness not satisfied by the refined program")
    if sat_proj(kind, FF, pre, post, tol):
        raise ContractError(f"no witness: the {kind} projector refinement holds")
    xp = wp_proj if kind == "total" else wlp_proj
    spec.violation = subspace_leq_margin(pre, xp(FF, post, tol))
    return spec


def refines_proj(kind: str, E: Superoperator, F: Superoperator, tol: Tolerances = DEFAULT_TOL) -> RefinementVerdict:
    """Projector-based refinement via Kraus spans.

    Partial holds iff ``span(F) <= span(E)``.  Total holds iff ``T_E <= T_F``
    and ``span(F o P_T) <= span(E o P_T)`` with ``P_T`` the projection onto
    ``T_E``.
    """
    if E.dim != F.dim:
        raise DimensionError(f"programs act on {E.dim} and {F.dim}")
    details = {}
    if _kind(kind) == "partial":
        sE, sF = _span(E, tol), _span(F, tol)
        holds = subspace_op("leq", sF, sE, tol)
        margin = -subspace_leq_margin(sF, sE)
    else:
        TE, TF = termination_space(E, tol), termination_space(F, tol)
        t_ok = subspace_op("leq", TE, TF, tol)
        sE, sF = _span(_restrict(E, TE), tol), _span(_restrict(F, TE), tol)
        s_ok = subspace_op("leq", sF, sE, tol)
        holds = t_ok and s_ok
        margin = -max(subspace_leq_margin(TE, TF), subspace_leq_margin(sF, sE))
        details = {"termination_included": t_ok, "span_included": s_ok}
    verdict = RefinementVerdict(holds, ORDER_TAGS["proj", kind], margin, details=details)
    if not holds:
        verdict.witness = proj_witness(kind, E, F, tol)
    return verdict


# -- transformer algebra -------------------------------------------------------


@dataclass
class Clause:
    name: str
    holds: bool
    margin: float


def _leq(name, S1, S2, tol):
    return Clause(name, subspace_op("leq", S1, S2, tol), -subspace_leq_margin(S1, S2))


def _eq(name, S1, S2, tol):
    m = max(subspace_leq_margin(S1, S2), subspace_leq_margin(S2, S1))
    return Clause(name, subspace_op("leq", S1, S2, tol) and subspace_op("leq", S2, S1, tol), -m)


def transformer_clauses(wp, wlp, sp, P: Subspace, Q: Subspace, tol: Tolerances) -> list[Clause]:
    """Every non-frame clause of the projector transformer laws, for given transformers."""
    d = P.ambient_dim
    I, O = Subspace.full(d), Subspace.zero(d)
    out = [
        _leq("galois: sp(wlp Q) <= Q", sp(wlp(Q)), Q, tol),
        _leq("galois: P <= wlp(sp P)", P, wlp(sp(P)), tol),
        _eq("wp Q = wlp Q meet wp I", wp(Q), subspace_op("meet", wlp(Q), wp(I), tol), tol),
        _leq("sp(wp Q) <= Q", sp(wp(Q)), Q, tol),
    ]
    if subspace_op("leq", P, wp(I), tol):
        out.append(_leq("P <= wp I implies P <= wp(sp P)", P, wp(sp(P)), tol))
    out += [
        _eq("wp 0 = 0", wp(O), O, tol),
        _eq("sp 0 = 0", sp(O), O, tol),
        _eq("wlp I = I", wlp(I), I, tol),
    ]
    PQm, PQj = subspace_op("meet", P, Q, tol), subspace_op("join", P, Q, tol)
    for lo, hi in ((PQm, P), (P, PQj)):
        for nm, xp in (("wp", wp), ("wlp", wlp), ("sp", sp)):
            out.append(_leq(f"monotone {nm}", xp(lo), xp(hi), tol))
    for nm, xp in (("wp", wp), ("wlp", wlp)):
        out.append(_eq(f"{nm}(P meet Q) = {nm} P meet {nm} Q", xp(PQm), subspace_op("meet", xp(P), xp(Q), tol), tol))
        out.append(_leq(f"{nm} P join {nm} Q <= {nm}(P join Q)", subspace_op("join", xp(P), xp(Q), tol), xp(PQj), tol))
    out.append(_leq("sp(P meet Q) <= sp P meet sp Q", sp(PQm), subspace_op("meet", sp(P), sp(Q), tol), tol))
    out.append(_eq("sp P join sp Q = sp(P join Q)", subspace_op("join", sp(P), sp(Q), tol), sp(PQj), tol))
    return out


def frame_clauses(wp, wlp, sp, wp_ext, wlp_ext, sp_ext, P: Subspace, Q: Subspace, R: Subspace,
                  tol: Tolerances) -> list[Clause]:
    """Frame laws: the ``_ext`` transformers act on the system extended by ``R``'s factor."""
    return [
        _eq("frame: wp(Q x R) = wp Q x R", wp_ext(Q.tensor(R)), wp(Q).tensor(R), tol),
        _eq("frame: sp(P x R) = sp P x R", sp_ext(P.tensor(R)), sp(P).tensor(R), tol),
        _leq("frame: wlp Q x R <= wlp(Q x R)", wlp(Q).tensor(R), wlp_ext(Q.tensor(R)), tol),
    ]


@dataclass
class AlgebraReport:
    clauses: list

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.clauses)

    def failed(self) -> list:
        return [c for c in self.clauses if not c.holds]


def check_transformer_algebra(E: Superoperator, P, Q, R=None, tol: Tolerances = DEFAULT_TOL) -> AlgebraReport:
    """Evaluate the Galois-connection and transformer laws for ``E`` at ``P, Q``.

    ``R`` (a projector on a separate factor) turns on the frame laws, with
    ``E`` extended as ``E (x) id_R``.
    """
    P, Q = as_subspace(P, tol), as_subspace(Q, tol)
    _check_dims(E, P)
    _check_dims(E, Q)
    wp = lambda S: wp_proj(E, S, tol)
    wlp = lambda S: wlp_proj(E, S, tol)
    sp = lambda S: sp_proj(E, S, tol)
    clauses = transformer_clauses(wp, wlp, sp, P, Q, tol)
    if R is not None:
        R = as_subspace(R, tol)
        ER = tensor_extend(E, R.ambient_dim, "right")
        clauses += frame_clauses(
            wp, wlp, sp,
            lambda S: wp_proj(ER, S, tol), lambda S: wlp_proj(ER, S, tol), lambda S: sp_proj(ER, S, tol),
            P, Q, R, tol,
        )
    return AlgebraReport(clauses)
