"""Quantum predicates: projectors, effects and finite effect sets.

Effects, projectors and (partial) density operators are plain Hermitian
``numpy`` arrays, checked by :func:`as_effect`, :func:`as_projector` and
:func:`as_density`.  An :class:`EffectSet` is a finite generator list; with
``hull=True`` it stands for the closed convex hull of its generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qref.errors import DimensionError, InvalidPredicateError, SideConditionError
from qref.linalg import (
    DEFAULT_TOL,
    Subspace,
    Tolerances,
    as_square,
    herm,
    lmi_simplex_feasible,
    loewner_leq,
    spec_norm,
    subspace_op,
    support,
)


def as_effect(M, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    M = herm(M)
    I = np.eye(M.shape[0])
    if not (loewner_leq(np.zeros_like(M), M, tol)[0] and loewner_leq(M, I, tol)[0]):
        raise InvalidPredicateError("effect must satisfy 0 <= M <= I")
    return M


def as_projector(P, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    if isinstance(P, Subspace):
        return P.projector()
    P = as_square(P)
    if spec_norm(P - P.conj().T) > tol.eps_psd or spec_norm(P @ P - P) > tol.eps_psd * max(1.0, spec_norm(P)):
        raise InvalidPredicateError("projector must be Hermitian and idempotent")
    return herm(P)


def as_density(rho, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    rho = herm(rho)
    if not loewner_leq(np.zeros_like(rho), rho, tol)[0]:
        raise InvalidPredicateError("density operator must be PSD")
    if np.real(np.trace(rho)) > 1 + tol.eps_psd:
        raise InvalidPredicateError("partial density operator must have trace at most 1")
    return rho


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")


def trace(A) -> float:
    return float(np.real(np.trace(A)))


@dataclass
class EffectSet:
    """Finite generator list of effects; ``hull`` marks convex-hull reading."""

    dim: int
    generators: list = field(default_factory=list)
    hull: bool = True

    def __post_init__(self):
        gens = []
        for M in self.generators:
            M = herm(M)
            if M.shape != (self.dim, self.dim):
                raise DimensionError(f"generator of shape {M.shape} in a set on dimension {self.dim}")
            gens.append(M)
        self.generators = gens

    @classmethod
    def of(cls, *mats, hull: bool = True) -> "EffectSet":
        if not mats:
            raise ValueError("use EffectSet(dim) for the empty set")
        return cls(np.asarray(mats[0]).shape[0], list(mats), hull)

    def validate(self, tol: Tolerances = DEFAULT_TOL) -> "EffectSet":
        for M in self.generators:
            as_effect(M, tol)
        return self

    def __len__(self):
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)


def satisfies_projector(rho, P, tol: Tolerances = DEFAULT_TOL) -> bool:
    """``rho |= P`` iff the support of ``rho`` lies inside ``P``."""
    rho = herm(rho)
    S = P if isinstance(P, Subspace) else support(as_projector(P, tol), tol)
    if S.ambient_dim != rho.shape[0]:
        raise DimensionError(f"state on {rho.shape[0]}, projector on {S.ambient_dim}")
    return subspace_op("leq", support(rho, tol), S, tol)


def exp_satisfaction(rho, M) -> float:
    rho, M = herm(rho), herm(M)
    _same_dim(rho, M)
    return trace(M @ rho)


def dem_sat(rho, Theta: EffectSet) -> float:
    """Guaranteed satisfaction ``inf_M tr(M rho)``; ``tr(rho)`` for the empty set."""
    rho = herm(rho)
    if rho.shape[0] != Theta.dim:
        raise DimensionError(f"state on {rho.shape[0]}, predicate on {Theta.dim}")
    if not Theta.generators:
        return trace(rho)
    return min(trace(M @ rho) for M in Theta)


def ang_sat(rho, Theta: EffectSet) -> float:
    """Possible satisfaction ``sup_M tr(M rho)``; 0 for the empty set."""
    rho = herm(rho)
    if rho.shape[0] != Theta.dim:
        raise DimensionError(f"state on {rho.shape[0]}, predicate on {Theta.dim}")
    if not Theta.generators:
        return 0.0
    return max(trace(M @ rho) for M in Theta)


def complement_set(Theta: EffectSet) -> EffectSet:
    I = np.eye(Theta.dim)
    return EffectSet(Theta.dim, [I - M for M in Theta], Theta.hull)


def _exists_below(Theta: EffectSet, N, hull: bool, tol: Tolerances) -> bool:
    # some element of Theta (or of its hull) lies below N
    if hull:
        return lmi_simplex_feasible(Theta.generators, N, "below", tol).feasible
    return any(loewner_leq(M, N, tol)[0] for M in Theta)


def _exists_above(Psi: EffectSet, M, hull: bool, tol: Tolerances) -> bool:
    if hull:
        return lmi_simplex_feasible(Psi.generators, M, "above", tol).feasible
    return any(loewner_leq(M, N, tol)[0] for N in Psi)


def powerdomain_leq(kind: str, Theta: EffectSet, Psi: EffectSet, mode: str = "finite",
                    tol: Tolerances = DEFAULT_TOL) -> bool:
    """Hoare, Smyth or Egli-Milner order between two effect sets.

    ``mode="finite"`` quantifies over the generators as given.
    ``mode="hull"`` reads both sides as convex hulls; it is enough to check
    the generators of the universally quantified side, because mixtures of
    dominating pairs dominate the mixtures.
    """
    if Theta.dim != Psi.dim:
        raise DimensionError(f"sets on {Theta.dim} and {Psi.dim}")
    if mode not in ("finite", "hull"):
        raise ValueError(f"mode must be 'finite' or 'hull', not {mode!r}")
    hull = mode == "hull"
    if kind == "smyth":
        if not Psi.generators:
            return True
        if not Theta.generators:
            return False
        return all(_exists_below(Theta, N, hull, tol) for N in Psi)
    if kind == "hoare":
        if not Theta.generators:
            return True
        if not Psi.generators:
            return False
        return all(_exists_above(Psi, M, hull, tol) for M in Theta)
    if kind == "egli_milner":
        return (powerdomain_leq("hoare", Theta, Psi, mode, tol)
                and powerdomain_leq("smyth", Theta, Psi, mode, tol))
    raise ValueError(f"unknown powerdomain order {kind!r}")


def dem_order(Theta: EffectSet, Psi: EffectSet, tol: Tolerances = DEFAULT_TOL) -> bool:
    """Demonic order on convex closed sets, decided as the Smyth order on hulls."""
    if not Theta.generators:
        raise SideConditionError("demonic order needs a nonempty left-hand set")
    return powerdomain_leq("smyth", Theta, Psi, "hull", tol)


def ang_order(Theta: EffectSet, Psi: EffectSet, tol: Tolerances = DEFAULT_TOL) -> bool:
    """Angelic order, via ``Theta <=ang Psi  iff  (I - Psi) <=dem (I - Theta)``."""
    if not Psi.generators:
        raise SideConditionError("angelic order needs a nonempty right-hand set")
    return dem_order(complement_set(Psi), complement_set(Theta), tol)
