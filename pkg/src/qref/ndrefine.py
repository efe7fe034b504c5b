"""Nondeterministic programs: convex hulls of finitely many CPTN maps.

Set-of-effects refinement is the Smyth order (total) or the reversed Hoare
order (partial) on the hulls, decided one right-hand generator at a time
with :func:`qref.linalg.lmi_simplex_feasible` over Choi matrices.
Projector transformers take meets (``wp``, ``wlp``) or joins (``sp``) over
the generators; for hulls this equals the meet/join over every mixture.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qref.detrefine import (
    ORDER_TAGS,
    RefinementVerdict,
    Specification,
    _restrict,
    doubled,
    embed,
    sp_proj,
    termination_space,
    wlp_effect,
    wlp_proj,
    wp_effect,
    wp_proj,
)
from qref.errors import ContractError, DimensionError, InvalidProgramError, SideConditionError
from qref.linalg import (
    DEFAULT_TOL,
    Subspace,
    Tolerances,
    as_subspace,
    certificate_gap,
    join_all,
    lmi_simplex_feasible,
    loewner_leq,
    max_entangled,
    meet_all,
    span_of_matrices,
    subspace_leq_margin,
    subspace_op,
    support,
)
from qref.predicates import EffectSet
from qref.programs import Superoperator, choi, tensor_extend, validate_cptn


class NProgram:
    """Nonempty finite list of CPTN generators, read as their convex hull."""

    __slots__ = ("generators", "dim")

    def __init__(self, generators: Sequence[Superoperator]):
        gens = list(generators)
        if not gens:
            raise InvalidProgramError("a nondeterministic program needs at least one generator")
        d = gens[0].dim
        if any(E.dim != d for E in gens):
            raise DimensionError("generators act on different dimensions")
        self.generators = tuple(gens)
        self.dim = d

    @classmethod
    def lift(cls, E) -> "NProgram":
        return E if isinstance(E, NProgram) else cls([E])

    def validate(self, tol: Tolerances = DEFAULT_TOL) -> "NProgram":
        for E in self.generators:
            ok, _, margin = validate_cptn(E, tol)
            if not ok:
                raise InvalidProgramError(f"generator is not trace-nonincreasing (margin {margin:.3e})")
        return self

    def __len__(self):
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def __repr__(self):
        return f"NProgram(dim={self.dim}, n_generators={len(self.generators)})"


def nd_doubled(Ep: NProgram) -> NProgram:
    return NProgram([doubled(E) for E in Ep])


def nd_extend(Ep: NProgram, extra_dim: int, side: str = "right") -> NProgram:
    return NProgram([tensor_extend(E, extra_dim, side) for E in Ep])


def _check_pair(Ep: NProgram, Fp: NProgram) -> None:
    if Ep.dim != Fp.dim:
        raise DimensionError(f"programs act on {Ep.dim} and {Fp.dim}")


def _kind(kind: str) -> str:
    if kind not in ("total", "partial"):
        raise ValueError(f"kind must be 'total' or 'partial', not {kind!r}")
    return kind


@dataclass
class Certificate:
    """A state separating one right-hand generator from the left-hand hull."""

    state: np.ndarray
    generator: int
    gap: float
    direction: str


def nd_refines_set(kind: str, Ep: NProgram, Fp: NProgram, tol: Tolerances = DEFAULT_TOL) -> RefinementVerdict:
    """Set-of-effects refinement ``Ep <=^s Fp``.

    Total: every generator ``F`` of ``Fp`` dominates some mixture of ``Ep``
    (Smyth).  Partial: every generator ``F`` of ``Fp`` is dominated by some
    mixture of ``Ep`` (Hoare, roles swapped).  On failure the verdict carries
    the separating Choi-space state and the single-formula specification.
    """
    Ep, Fp = NProgram.lift(Ep), NProgram.lift(Fp)
    _check_pair(Ep, Fp)
    direction = "below" if _kind(kind) == "total" else "above"
    As = [choi(E) for E in Ep]
    margin = np.inf
    for j, F in enumerate(Fp):
        res = lmi_simplex_feasible(As, choi(F), direction, tol)
        margin = min(margin, res.bound)
        if not res.feasible:
            gap = certificate_gap(res.certificate, As, choi(F), direction)
            cert = Certificate(res.certificate, j, gap, direction)
            spec = nd_witness_spec(kind, Ep, Fp, tol)
            return RefinementVerdict(False, ORDER_TAGS["set", kind], float(res.bound),
                                     witness=spec, details={"certificate": cert})
    return RefinementVerdict(True, ORDER_TAGS["set", kind], float(margin))


def nd_refines_singleton_consistency(E: Superoperator, F: Superoperator, tol: Tolerances = DEFAULT_TOL) -> dict:
    """Compare singleton set-refinement with effect refinement for both kinds."""
    from qref.detrefine import refines_effect

    out = {}
    for kind in ("total", "partial"):
        a = nd_refines_set(kind, NProgram([E]), NProgram([F]), tol).holds
        b = refines_effect(kind, E, F, tol).holds
        out[kind] = {"set": a, "effect": b, "agree": a == b}
    return out


def smyth_leq(Ep: NProgram, Fp: NProgram, tol: Tolerances = DEFAULT_TOL) -> bool:
    return nd_refines_set("total", Ep, Fp, tol).holds


def hoare_leq(Ep: NProgram, Fp: NProgram, tol: Tolerances = DEFAULT_TOL) -> bool:
    """``Ep <=_H Fp``: every generator of ``Ep`` lies below some mixture of ``Fp``."""
    return nd_refines_set("partial", Fp, Ep, tol).holds


def egli_milner_leq(Ep: NProgram, Fp: NProgram, tol: Tolerances = DEFAULT_TOL) -> bool:
    return smyth_leq(Ep, Fp, tol) and hoare_leq(Ep, Fp, tol)


# -- set transformers ----------------------------------------------------------


def wp_set(Ep: NProgram, Psi: EffectSet) -> EffectSet:
    """``{E^dag(N)}`` over generator pairs; hull-read."""
    Ep = NProgram.lift(Ep)
    if Psi.dim != Ep.dim:
        raise DimensionError(f"program on {Ep.dim}, predicate on {Psi.dim}")
    return EffectSet(Ep.dim, [wp_effect(E, N) for E in Ep for N in Psi], True)


def wlp_set(Ep: NProgram, Psi: EffectSet) -> EffectSet:
    """``I - Ep^dag(I - Psi)`` over generator pairs; hull-read."""
    Ep = NProgram.lift(Ep)
    if Psi.dim != Ep.dim:
        raise DimensionError(f"program on {Ep.dim}, predicate on {Psi.dim}")
    I = np.eye(Ep.dim)
    return EffectSet(Ep.dim, [I - wp_effect(E, I - N) for E in Ep for N in Psi], True)


def _dem_below(Theta: EffectSet, X: EffectSet, tol: Tolerances) -> bool:
    # Theta <=dem X with Theta convex: Smyth order checked on generators of X
    if not Theta.generators and not X.generators:
        raise SideConditionError("both the precondition and the transformed postcondition are empty")
    if not X.generators:
        return True
    if not Theta.generators:
        I = np.eye(X.dim)
        return all(loewner_leq(I, x, tol)[0] for x in X)
    for x in X:
        if Theta.hull:
            if not lmi_simplex_feasible(Theta.generators, x, "below", tol).feasible:
                return False
        elif not any(loewner_leq(M, x, tol)[0] for M in Theta):
            return False
    return True


def nd_sat(kind: str, Ep: NProgram, Theta: EffectSet, Psi: EffectSet, tol: Tolerances = DEFAULT_TOL) -> bool:
    """``Ep |= (Theta, Psi)``: ``Theta <=dem wp^s(Psi)`` (total) or ``wlp^s(Psi)`` (partial)."""
    Ep = NProgram.lift(Ep)
    if Theta.dim != Ep.dim:
        raise DimensionError(f"program on {Ep.dim}, precondition on {Theta.dim}")
    X = wp_set(Ep, Psi) if _kind(kind) == "total" else wlp_set(Ep, Psi)
    return _dem_below(Theta, X, tol)


def nd_single_formula_spec(kind: str, Ep: NProgram) -> Specification:
    Ep = NProgram.lift(Ep)
    d = Ep.dim
    Omega = max_entangled(d)
    EE = nd_doubled(Ep)
    if _kind(kind) == "total":
        post = EffectSet(d * d, [Omega])
        return Specification("effect_set", wp_set(EE, post), post, d * d, "total")
    post = EffectSet(d * d, [np.eye(d * d) - Omega])
    return Specification("effect_set", wlp_set(EE, post), post, d * d, "partial")


def nd_witness_spec(kind: str, Ep: NProgram, Fp: NProgram, tol: Tolerances = DEFAULT_TOL) -> Specification:
    """Single set-specification on the doubled space satisfied by ``Ep``, violated by ``Fp``."""
    Ep, Fp = NProgram.lift(Ep), NProgram.lift(Fp)
    _check_pair(Ep, Fp)
    spec = nd_single_formula_spec(kind, Ep)
    if nd_sat(kind, nd_doubled(Fp), spec.pre, spec.post, tol):
        raise ContractError(f"no witness: the {kind} set refinement holds")
    if not nd_sat(kind, nd_doubled(Ep), spec.pre, spec.post, tol):
        raise ContractError("internal error: witness not satisfied by the refined program")
    X = wp_set(nd_doubled(Fp), spec.post) if kind == "total" else wlp_set(nd_doubled(Fp), spec.post)
    spec.violation = max(-lmi_simplex_feasible(spec.pre.generators, x, "below", tol).bound for x in X)
    return spec


# -- projector transformers ----------------------------------------------------


def wp_proj_nd(Ep: NProgram, Q, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    Ep = NProgram.lift(Ep)
    return meet_all([wp_proj(E, Q, tol) for E in Ep], Ep.dim, tol)


def wlp_proj_nd(Ep: NProgram, Q, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    Ep = NProgram.lift(Ep)
    return meet_all([wlp_proj(E, Q, tol) for E in Ep], Ep.dim, tol)


def sp_proj_nd(Ep: NProgram, Q, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    Ep = NProgram.lift(Ep)
    return join_all([sp_proj(E, Q, tol) for E in Ep], Ep.dim, tol)


def termination_space_nd(Ep: NProgram, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    Ep = NProgram.lift(Ep)
    return meet_all([termination_space(E, tol) for E in Ep], Ep.dim, tol)


def sat_proj_nd(kind: str, Ep: NProgram, P, Q, tol: Tolerances = DEFAULT_TOL) -> bool:
    P = as_subspace(P, tol)
    xp = wp_proj_nd if _kind(kind) == "total" else wlp_proj_nd
    return subspace_op("leq", P, xp(Ep, Q, tol), tol)


def _pooled_span(Ep: NProgram, tol: Tolerances, T: Subspace | None = None) -> Subspace:
    ops = []
    for E in Ep:
        ops.extend((_restrict(E, T) if T is not None else E).kraus)
    return span_of_matrices(ops, tol)


def nd_proj_witness(kind: str, Ep: NProgram, Fp: NProgram, tol: Tolerances = DEFAULT_TOL) -> Specification:
    d = Ep.dim
    EE, FF = nd_doubled(Ep), nd_doubled(Fp)
    if _kind(kind) == "partial":
        pre = support(max_entangled(d), tol)
        post = sp_proj_nd(EE, pre, tol)
    else:
        TE, TF = termination_space_nd(Ep, tol), termination_space_nd(Fp, tol)
        if not subspace_op("leq", TE, TF, tol):
            pre, post = embed(TE, 1, d), Subspace.full(d * d)
        else:
            w = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
            phi = np.kron(TE.projector(), np.eye(d)) @ w
            pre = Subspace.span(phi.reshape(-1, 1), d * d, tol)
            post = sp_proj_nd(EE, pre, tol)
    spec = Specification("projector", pre, post, d * d, kind)
    if not sat_proj_nd(kind, EE, pre, post, tol):
        raise ContractError("internal error: projector witness not satisfied by the refined program")
    if sat_proj_nd(kind, FF, pre, post, tol):
        raise ContractError(f"no witness: the {kind} projector refinement holds")
    xp = wp_proj_nd if kind == "total" else wlp_proj_nd
    spec.violation = subspace_leq_margin(pre, xp(FF, post, tol))
    return spec


def nd_refines_proj(kind: str, Ep: NProgram, Fp: NProgram, tol: Tolerances = DEFAULT_TOL) -> RefinementVerdict:
    """Projector refinement of hulls via pooled Kraus spans."""
    Ep, Fp = NProgram.lift(Ep), NProgram.lift(Fp)
    _check_pair(Ep, Fp)
    details = {}
    if _kind(kind) == "partial":
        sE, sF = _pooled_span(Ep, tol), _pooled_span(Fp, tol)
        holds = subspace_op("leq", sF, sE, tol)
        margin = -subspace_leq_margin(sF, sE)
    else:
        TE, TF = termination_space_nd(Ep, tol), termination_space_nd(Fp, tol)
        t_ok = subspace_op("leq", TE, TF, tol)
        sE, sF = _pooled_span(Ep, tol, TE), _pooled_span(Fp, tol, TE)
        s_ok = subspace_op("leq", sF, sE, tol)
        holds = t_ok and s_ok
        margin = -max(subspace_leq_margin(TE, TF), subspace_leq_margin(sF, sE))
        details = {"termination_included": t_ok, "span_included": s_ok}
    verdict = RefinementVerdict(holds, ORDER_TAGS["proj", kind], margin, details=details)
    if not holds:
        verdict.witness = nd_proj_witness(kind, Ep, Fp, tol)
    return verdict


# -- effects are weaker than effect sets ---------------------------------------


def rank_one_program(x) -> Superoperator:
    """The map with the single Kraus operator ``|x><x|``."""
    x = np.asarray(x, dtype=complex).reshape(-1)
    x = x / np.linalg.norm(x)
    return Superoperator([np.outer(x, x.conj())])


def _forced_zero_precondition(Ep: NProgram, N) -> float:
    # largest eigenvalue any M <= E_i^dag(N) (all i) can have, over the basis
    # states |0>,|1>: <k|M|k> <= min_i <k|E_i^dag(N)|k>, so tr M <= that sum
    X = [wp_effect(E, N) for E in Ep]
    return float(sum(min(np.real(x[k, k]) for x in X) for k in range(Ep.dim)))


def nd_weaker_order_demo(n_draws: int = 500, n_states: int = 64, seed: int = 0,
                         tol: Tolerances = DEFAULT_TOL) -> dict:
    """Set refinement strictly stronger than effect refinement, both kinds.

    (i) ``conv{E_0, E_1}`` against ``{E_+}``: the total set order fails with
    a certificate, while sampling total effect specifications finds no
    violation and every satisfiable precondition has zero trace.
    (ii) ``conv{E_psi}`` over ``n_states`` sampled pure states against the
    identity: the partial set order fails.  Sampled partial effect
    specifications are then checked against the identity; with finitely many
    generators violations do exist and shrink as ``n_states`` grows.  The
    all-states argument is checked through ``<psi|wlp_psi(N)|psi> =
    <psi|N|psi>``, which forces ``M <= N`` once every ``psi`` is present.
    """
    from qref.oracles import random_effect, refutation_search, sample_density

    e0, e1 = np.array([1, 0]), np.array([0, 1])
    plus = np.array([1, 1]) / np.sqrt(2)
    E01 = NProgram([rank_one_program(e0), rank_one_program(e1)])
    Eplus = NProgram([rank_one_program(plus)])

    set_i = nd_refines_set("total", E01, Eplus, tol)
    rng = np.random.default_rng(seed)
    trace_bounds = [_forced_zero_precondition(E01, random_effect(2, rng)) for _ in range(50)]
    cex_i = refutation_search("tot-e", E01, Eplus, n_draws, rng, tol)
    scenario_i = {
        "set_refines": set_i.holds,
        "certificate": set_i.details.get("certificate"),
        "effect_counterexample": cex_i,
        "max_precondition_trace": max(trace_bounds),
    }

    states = []
    for _ in range(n_states):
        rho = sample_density(2, "pure", rng)
        w, V = np.linalg.eigh(rho)
        states.append(V[:, -1])
    Epsi = NProgram([rank_one_program(v) for v in states])
    Id = NProgram([Superoperator.identity(2)])
    set_ii = nd_refines_set("partial", Epsi, Id, tol)
    cex_ii = refutation_search("par-e", Epsi, Id, n_draws, rng, tol)
    diag_res = 0.0
    for v in states:
        N = random_effect(2, rng)
        x = wlp_effect(rank_one_program(v), N)
        diag_res = max(diag_res, abs(np.vdot(v, x @ v) - np.vdot(v, N @ v)))
    scenario_ii = {
        "set_refines": set_ii.holds,
        "certificate": set_ii.details.get("certificate"),
        "effect_counterexample": cex_ii,
        "n_states": n_states,
        "diagonal_residual": diag_res,
    }

    singleton = nd_refines_singleton_consistency(Superoperator.identity(2),
                                                 Superoperator.identity(2).scaled(0.5), tol)
    return {"scenario_i": scenario_i, "scenario_ii": scenario_ii, "singleton": singleton}
