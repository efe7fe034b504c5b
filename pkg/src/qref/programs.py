"""Deterministic quantum programs as CPTN super-operators.

A :class:`Superoperator` is a list of Kraus operators ``K_i`` acting as
``rho -> sum_i K_i rho K_i^dagger``.  The Choi matrix uses the normalized
maximally entangled state and the (output, reference) factor order::

    J(E) = (E (x) id)(Omega),   Omega = |w><w|,   |w> = d^(-1/2) sum_i |i>|i>

so ``J(E) = (1/d) sum_i vec(K_i) vec(K_i)^dagger`` with row-major ``vec``.
Two super-operators are equal when their Choi matrices agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qref.errors import DimensionError, InvalidProgramError
from qref.linalg import (
    DEFAULT_TOL,
    Tolerances,
    as_square,
    dagger,
    herm,
    loewner_leq,
    spec_norm,
    swap_operator,
)

CHOI_ORDER = "out_ref"


class Superoperator:
    """A completely positive map given by a nonempty Kraus list.

    The zero map is encoded as a single all-zeros Kraus operator.
    """

    __slots__ = ("kraus", "dim")

    def __init__(self, kraus: Sequence):
        ops = [as_square(K) for K in kraus]
        if not ops:
            raise InvalidProgramError("a Kraus list must be nonempty; use Superoperator.zero(d)")
        d = ops[0].shape[0]
        if any(K.shape != (d, d) for K in ops):
            raise DimensionError("Kraus operators must all be d x d")
        self.kraus = tuple(ops)
        self.dim = d

    @classmethod
    def identity(cls, d: int) -> "Superoperator":
        return cls([np.eye(d)])

    @classmethod
    def zero(cls, d: int) -> "Superoperator":
        return cls([np.zeros((d, d))])

    @classmethod
    def unitary(cls, U) -> "Superoperator":
        return cls([U])

    @classmethod
    def from_choi(cls, J, tol: Tolerances = DEFAULT_TOL) -> "Superoperator":
        return kraus_from_choi(J, tol)

    def scaled(self, p: float) -> "Superoperator":
        """The map ``p * E`` (``p >= 0``)."""
        if p < 0:
            raise ValueError("scale must be non-negative")
        return Superoperator([np.sqrt(p) * K for K in self.kraus])

    def __call__(self, rho) -> np.ndarray:
        return apply(self, rho)

    def choi(self) -> np.ndarray:
        return choi(self)

    def __repr__(self):
        return f"Superoperator(dim={self.dim}, n_kraus={len(self.kraus)})"


def validate_cptn(E: Superoperator, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, bool, float]:
    """Return ``(ok, trace_preserving, margin)`` with ``margin = lambda_min(I - sum K^dag K)``."""
    S = sum(dagger(K) @ K for K in E.kraus)
    I = np.eye(E.dim)
    ok, margin = loewner_leq(S, I, tol)
    tp = spec_norm(I - S) <= tol.eps_psd
    return ok, bool(ok and tp), margin


def check_cptn(E: Superoperator, tol: Tolerances = DEFAULT_TOL) -> Superoperator:
    ok, _, margin = validate_cptn(E, tol)
    if not ok:
        raise InvalidProgramError(f"program is not trace-nonincreasing (margin {margin:.3e})")
    return E


def apply(E: Superoperator, rho) -> np.ndarray:
    rho = as_square(rho)
    if rho.shape[0] != E.dim:
        raise DimensionError(f"state has dimension {rho.shape[0]}, program acts on {E.dim}")
    return sum(K @ rho @ dagger(K) for K in E.kraus)


def adjoint(E: Superoperator) -> Superoperator:
    return Superoperator([dagger(K) for K in E.kraus])


def compose(E: Superoperator, F: Superoperator) -> Superoperator:
    """Run ``E`` first, then ``F``: Kraus ``{F_j E_i}``."""
    if E.dim != F.dim:
        raise DimensionError(f"cannot compose maps on {E.dim} and {F.dim}")
    return Superoperator([Fj @ Ei for Ei in E.kraus for Fj in F.kraus])


def add(E: Superoperator, F: Superoperator) -> Superoperator:
    """The sum map ``E + F`` (Kraus union)."""
    if E.dim != F.dim:
        raise DimensionError(f"cannot add maps on {E.dim} and {F.dim}")
    return Superoperator(list(E.kraus) + list(F.kraus))


def tensor_extend(E: Superoperator, extra_dim: int, side: str = "left") -> Superoperator:
    """Extend by an idle system: ``left`` gives ``I (x) K``, ``right`` gives ``K (x) I``."""
    I = np.eye(extra_dim)
    if side == "left":
        return Superoperator([np.kron(I, K) for K in E.kraus])
    if side == "right":
        return Superoperator([np.kron(K, I) for K in E.kraus])
    raise ValueError(f"side must be 'left' or 'right', not {side!r}")


def choi(E: Superoperator) -> np.ndarray:
    V = np.stack([K.reshape(-1) for K in E.kraus], axis=1)
    return herm(V @ dagger(V)) / E.dim


def kraus_from_choi(J, tol: Tolerances = DEFAULT_TOL) -> Superoperator:
    """Canonical (orthogonal) Kraus list of a PSD Choi matrix."""
    J = herm(J)
    n = J.shape[0]
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise DimensionError(f"Choi matrix dimension {n} is not a square")
    w, V = np.linalg.eigh(J)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -tol.eps_psd * scale:
        raise InvalidProgramError(f"Choi matrix is not PSD (lambda_min = {w[0]:.3e})")
    keep = w > tol.eps_psd * 1e-3 * scale
    ops = [np.sqrt(d * w[k]) * V[:, k].reshape(d, d) for k in np.nonzero(keep)[0][::-1]]
    if not ops:
        return Superoperator.zero(d)
    return Superoperator(ops)


def choi_of_adjoint(E: Superoperator) -> np.ndarray:
    """``(E^dag (x) id)(Omega)``; equals ``SWAP conj(J(E)) SWAP``."""
    return choi(adjoint(E))


def choi_conjugate_swap(J) -> np.ndarray:
    n = J.shape[0]
    d = int(round(np.sqrt(n)))
    S = swap_operator(d, d)
    return S @ np.conj(J) @ S


def choi_equal(E: Superoperator, F: Superoperator, tol: Tolerances = DEFAULT_TOL) -> bool:
    if E.dim != F.dim:
        return False
    D = choi(E) - choi(F)
    return spec_norm(D) <= tol.eps_psd * max(1.0, spec_norm(choi(E)))


def cp_order(E: Superoperator, F: Superoperator, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, float]:
    """Approximation order ``E <= F`` (``F - E`` completely positive), via ``J(E) <= J(F)``."""
    if E.dim != F.dim:
        raise DimensionError(f"programs act on {E.dim} and {F.dim}")
    return loewner_leq(choi(E), choi(F), tol)


class TransposeMap:
    """The transpose map on ``d`` dimensions: positive but not completely positive.

    Not a :class:`Superoperator` (it has no Kraus form); exposes the same
    ``__call__``, ``choi`` and ``dim`` surface.
    """

    def __init__(self, d: int):
        self.dim = d

    def __call__(self, rho) -> np.ndarray:
        return as_square(rho).T

    def choi(self) -> np.ndarray:
        d = self.dim
        return swap_operator(d, d).astype(complex) / d


def transpose_map(d: int) -> TransposeMap:
    return TransposeMap(d)


def _choi_any(E) -> np.ndarray:
    return E.choi() if hasattr(E, "choi") else choi(E)


def cp_order_maps(E, F, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, float]:
    """:func:`cp_order` for anything with a ``choi()`` method, including :class:`TransposeMap`."""
    return loewner_leq(_choi_any(E), _choi_any(F), tol)


@dataclass
class PointwiseResult:
    holds: bool
    samples: int
    worst_margin: float
    note: str = "sampled, not a decision procedure"


def pointwise_leq_sampled(E, F, n: int = 1000, seed: int = 0, tol: Tolerances = DEFAULT_TOL) -> PointwiseResult:
    """Look for a density operator with ``F(rho) - E(rho)`` not PSD.

    Sampled, not a decision procedure: ``holds`` only means no violation
    was found in ``n`` draws of pure and mixed states.
    """
    from qref.oracles import sample_density

    rng = np.random.default_rng(seed)
    worst = np.inf
    for k in range(n):
        kind = "pure" if k % 2 == 0 else "mixed"
        rho = sample_density(E.dim, kind, rng)
        ok, margin = loewner_leq(E(rho), F(rho), tol)
        worst = min(worst, margin)
        if not ok:
            return PointwiseResult(False, k + 1, worst)
    return PointwiseResult(True, n, float(worst))


def _ginibre(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_cptp(d: int, rank: int, seed, max_retries: int = 10) -> Superoperator:
    """Random channel: Gaussian Kraus list right-multiplied by ``S^(-1/2)``."""
    if rank < 1:
        raise ValueError("rank must be at least 1")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        G = _ginibre(rng, (rank, d, d))
        S = sum(dagger(K) @ K for K in G)
        w, V = np.linalg.eigh(herm(S))
        if w[0] <= 1e-12 * max(1.0, w[-1]):
            continue
        S_inv_half = (V / np.sqrt(w)) @ dagger(V)
        return Superoperator([K @ S_inv_half for K in G])
    raise InvalidProgramError("could not draw a nonsingular Kraus family")


def random_cptn(d: int, rank: int, seed) -> Superoperator:
    """Random CPTN map: a random channel scaled by ``c`` drawn uniformly from (0, 1]."""
    rng = np.random.default_rng(seed)
    E = random_cptp(d, rank, rng)
    c = 1.0 - rng.random()
    return E.scaled(c)
