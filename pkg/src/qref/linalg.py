"""Dense complex linear algebra used by every refinement check.

Everything here works on plain ``numpy`` arrays.  Hermitian inputs are
symmetrized as ``(A + A^dagger) / 2`` before any spectral call, and PSD
thresholds are relative to the spectral norm with a floor of one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from qref.errors import DimensionError, IndeterminateError, NotPSDError


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by all checks.

    The defaults are engineering choices; every entry point accepts an
    override.
    """

    eps_psd: float = 1e-9
    eps_rank: float = 1e-8
    eps_fix: float = 1e-10
    eps_feas: float = 1e-7
    max_cut_iters: int = 500
    max_fix_iters: int = 10000

    def __post_init__(self):
        for name in ("eps_psd", "eps_rank", "eps_fix", "eps_feas", "max_cut_iters", "max_fix_iters"):
            if not getattr(self, name) > 0:
                raise ValueError(f"tolerance {name} must be strictly positive")


DEFAULT_TOL = Tolerances()


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise DimensionError(f"expected a 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def as_square(A) -> np.ndarray:
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def herm(A) -> np.ndarray:
    A = as_square(A)
    return (A + A.conj().T) / 2


def dagger(A: np.ndarray) -> np.ndarray:
    return np.conj(A).T


def spec_norm(A) -> float:
    A = as_matrix(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def _check_same_dim(*mats: np.ndarray) -> None:
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(shapes)}")


def hermitian_eig(A) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the Hermitian part of ``A``.

    Returns ascending eigenvalues and a matrix whose columns are the
    corresponding orthonormal eigenvectors.
    """
    w, V = np.linalg.eigh(herm(A))
    return w, V


def lambda_min(A) -> float:
    return float(np.linalg.eigvalsh(herm(A))[0])


def loewner_leq(A, B, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, float]:
    """Decide ``A <= B`` in the Loewner order.

    The margin is ``lambda_min(B - A)``; the verdict allows a slack of
    ``eps_psd * max(1, ||B - A||)``.
    """
    A, B = as_square(A), as_square(B)
    _check_same_dim(A, B)
    D = herm(B - A)
    w = np.linalg.eigvalsh(D)
    scale = max(1.0, float(np.max(np.abs(w))))
    margin = float(w[0])
    return margin >= -tol.eps_psd * scale, margin


def is_psd(A, tol: Tolerances = DEFAULT_TOL) -> bool:
    A = as_square(A)
    return loewner_leq(np.zeros_like(A), A, tol)[0]


def tensor(*ops) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, as_matrix(op))
    return out


def partial_trace(A, dims: tuple[int, int], which: str = "first") -> np.ndarray:
    """Trace out one factor of a bipartite operator on ``d1 * d2``."""
    A = as_square(A)
    d1, d2 = dims
    if d1 * d2 != A.shape[0]:
        raise DimensionError(f"cannot factor dimension {A.shape[0]} as {d1}x{d2}")
    T = A.reshape(d1, d2, d1, d2)
    if which == "first":
        return np.einsum("ijik->jk", T)
    if which == "second":
        return np.einsum("ijkj->ik", T)
    raise ValueError(f"which must be 'first' or 'second', not {which!r}")


def swap_operator(d1: int, d2: int) -> np.ndarray:
    """Unitary taking ``|a>|b>`` on ``d1*d2`` to ``|b>|a>`` on ``d2*d1``."""
    S = np.zeros((d1 * d2, d1 * d2))
    for a in range(d1):
        for b in range(d2):
            S[b * d1 + a, a * d2 + b] = 1.0
    return S


def max_entangled(d: int) -> np.ndarray:
    """The normalized maximally entangled projector on ``d * d``."""
    w = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return np.outer(w, w.conj())


class Subspace:
    """A subspace held by an orthonormal basis (columns of ``basis``)."""

    __slots__ = ("basis",)

    def __init__(self, basis, ambient_dim: int | None = None):
        B = np.asarray(basis, dtype=complex)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.size == 0:
            if ambient_dim is None:
                ambient_dim = B.shape[0] if B.ndim == 2 else 0
            B = np.zeros((ambient_dim, 0), dtype=complex)
        if ambient_dim is not None and B.shape[0] != ambient_dim:
            raise DimensionError(f"basis vectors have length {B.shape[0]}, expected {ambient_dim}")
        self.basis = B

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(np.zeros((d, 0), dtype=complex), d)

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(np.eye(d, dtype=complex), d)

    @classmethod
    def span(cls, vectors, d: int, tol: Tolerances = DEFAULT_TOL) -> "Subspace":
        """Orthonormalize the columns of ``vectors``; rank by relative SVD cutoff."""
        V = np.asarray(vectors, dtype=complex).reshape(d, -1)
        if V.shape[1] == 0:
            return cls.zero(d)
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        if s.size == 0 or s[0] == 0:
            return cls.zero(d)
        r = int(np.sum(s > tol.eps_rank * max(1.0, s[0])))
        return cls(U[:, :r], d)

    @classmethod
    def from_projector(cls, P, tol: Tolerances = DEFAULT_TOL) -> "Subspace":
        return support(P, tol)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ dagger(self.basis)

    def complement(self) -> "Subspace":
        return subspace_op("complement", self)

    def contains(self, v, tol: Tolerances = DEFAULT_TOL) -> bool:
        v = np.asarray(v, dtype=complex).reshape(-1)
        resid = v - self.basis @ (dagger(self.basis) @ v)
        return float(np.linalg.norm(resid)) <= tol.eps_rank * max(1.0, float(np.linalg.norm(v)))

    def __and__(self, other: "Subspace") -> "Subspace":
        return subspace_op("meet", self, other)

    def __or__(self, other: "Subspace") -> "Subspace":
        return subspace_op("join", self, other)

    def __le__(self, other: "Subspace") -> bool:
        return subspace_op("leq", self, other)

    def equals(self, other: "Subspace", tol: Tolerances = DEFAULT_TOL) -> bool:
        return subspace_op("leq", self, other, tol) and subspace_op("leq", other, self, tol)

    def tensor(self, other: "Subspace") -> "Subspace":
        return Subspace(np.kron(self.basis, other.basis), self.ambient_dim * other.ambient_dim)

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def as_subspace(S, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Accept either a Subspace or a projector matrix."""
    if isinstance(S, Subspace):
        return S
    return support(S, tol)


def _rank_cutoff(w: np.ndarray, tol: Tolerances) -> float:
    return tol.eps_rank * max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)


def support(A, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Span of the eigenvectors of a PSD operator with non-negligible eigenvalue."""
    w, V = hermitian_eig(A)
    cut = _rank_cutoff(w, tol)
    if w.size and w[0] < -tol.eps_psd * max(1.0, float(np.max(np.abs(w)))):
        raise NotPSDError(f"support() needs a PSD operator; lambda_min = {w[0]:.3e}")
    return Subspace(V[:, w > cut], len(w))


def null_space(A, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Orthocomplement of :func:`support` for a PSD operator."""
    w, V = hermitian_eig(A)
    cut = _rank_cutoff(w, tol)
    return Subspace(V[:, np.abs(w) <= cut], len(w))


def eigenspace_one(A, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Eigenvalue-1 eigenspace of an effect, computed as ``null_space(I - A)``."""
    A = herm(A)
    lmax = float(np.linalg.eigvalsh(A)[-1]) if A.size else 0.0
    if lmax > 1 + tol.eps_psd * max(1.0, abs(lmax)):
        raise NotPSDError(f"eigenspace_one() needs A <= I; lambda_max = {lmax!r}")
    return null_space(np.eye(A.shape[0]) - A, tol)


def subspace_op(kind: str, S1: Subspace, S2: Subspace | None = None, tol: Tolerances = DEFAULT_TOL):
    """Lattice operations on subspaces: meet, join, complement, leq."""
    d = S1.ambient_dim
    if kind == "complement":
        return null_space(S1.projector(), tol) if S1.dim else Subspace.full(d)
    if S2 is None:
        raise ValueError(f"{kind} needs two operands")
    if S2.ambient_dim != d:
        raise DimensionError(f"ambient dimensions differ: {d} vs {S2.ambient_dim}")
    if kind == "meet":
        I = np.eye(d)
        return null_space(((I - S1.projector()) + (I - S2.projector())) / 2, tol)
    if kind == "join":
        return support((S1.projector() + S2.projector()) / 2, tol)
    if kind == "leq":
        if S1.dim == 0:
            return True
        resid = S1.basis - S2.basis @ (dagger(S2.basis) @ S1.basis)
        return bool(np.max(np.linalg.norm(resid, axis=0)) <= tol.eps_rank)
    raise ValueError(f"unknown subspace operation {kind!r}")


def subspace_leq_margin(S1: Subspace, S2: Subspace) -> float:
    """Largest residual of a basis vector of ``S1`` outside ``S2`` (0 when included)."""
    if S1.dim == 0:
        return 0.0
    resid = S1.basis - S2.basis @ (dagger(S2.basis) @ S1.basis)
    return float(np.max(np.linalg.norm(resid, axis=0)))


def meet_all(spaces: Sequence[Subspace], d: int, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    out = Subspace.full(d)
    for S in spaces:
        out = subspace_op("meet", out, S, tol)
    return out


def join_all(spaces: Sequence[Subspace], d: int, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    out = Subspace.zero(d)
    for S in spaces:
        out = subspace_op("join", out, S, tol)
    return out


def span_of_matrices(ops: Sequence, tol: Tolerances = DEFAULT_TOL, shape: tuple[int, int] | None = None) -> Subspace:
    """Linear span of matrices, flattened row-major into vectors of length ``rows*cols``."""
    ops = [as_matrix(K) for K in ops]
    if not ops:
        if shape is None:
            return Subspace.zero(0)
        return Subspace.zero(shape[0] * shape[1])
    _check_same_dim(*ops)
    n = ops[0].size
    V = np.stack([K.reshape(-1) for K in ops], axis=1)
    return Subspace.span(V, n, tol)


class LMIResult(NamedTuple):
    feasible: bool
    weights: np.ndarray
    certificate: np.ndarray | None
    bound: float
    iterations: int


def _bottom_vectors(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    # eigenvectors in the lowest cluster all give valid cuts
    width = 1e-9 * max(1.0, float(np.max(np.abs(w))))
    k = int(np.sum(w <= w[0] + width))
    return V[:, :k]


def _master_lp(cuts_c: np.ndarray, cuts_a: np.ndarray) -> tuple[np.ndarray, float]:
    # max t  s.t.  t + a_k . p <= c_k,  sum p = 1,  p >= 0
    K, n = cuts_a.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([cuts_a, np.ones((K, 1))])
    A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 1))])
    bounds = [(0, None)] * n + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=cuts_c, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise IndeterminateError(f"master LP failed: {res.message}")
    p = np.clip(res.x[:n], 0, None)
    p = p / p.sum()
    return p, float(res.x[-1])


def _dual_weights(cuts_c: np.ndarray, cuts_a: np.ndarray) -> np.ndarray:
    # min s  s.t.  sum_k mu_k (c_k - a_ki) <= s  for every i,  mu in simplex
    K, n = cuts_a.shape
    G = (cuts_c[:, None] - cuts_a).T  # n x K
    c = np.zeros(K + 1)
    c[-1] = 1.0
    A_ub = np.hstack([G, -np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, K)), np.zeros((1, 1))])
    bounds = [(0, None)] * K + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise IndeterminateError(f"dual LP failed: {res.message}")
    mu = np.clip(res.x[:K], 0, None)
    return mu / mu.sum()


def lmi_simplex_feasible(As: Sequence, B, direction: str = "below", tol: Tolerances = DEFAULT_TOL) -> LMIResult:
    """Decide whether some convex mixture of ``As`` lies below (or above) ``B``.

    ``below`` asks for ``p`` in the simplex with ``B - sum_i p_i A_i >= 0``;
    ``above`` asks for ``sum_i p_i A_i - B >= 0``.

    The concave function ``f(p) = lambda_min(B - sum_i p_i A_i)`` is
    maximized by Kelley's cutting-plane method: every evaluation adds the
    linear upper bounds ``v^dag B v - sum_i p_i v^dag A_i v`` for the
    bottom eigenvectors ``v``, and the envelope is maximized by a dual
    simplex LP.  On infeasibility the dual weights of the cuts give a
    unit-trace state ``rho`` with ``tr(rho B) < min_i tr(rho A_i)``
    (inequality reversed for ``above``), returned as ``certificate``.

    Raises :class:`IndeterminateError` if the cut budget runs out first.
    """
    if not As:
        raise ValueError("lmi_simplex_feasible needs at least one generator")
    As = [herm(A) for A in As]
    B = herm(B)
    _check_same_dim(B, *As)
    if direction == "above":
        As, B = [-A for A in As], -B
    elif direction != "below":
        raise ValueError(f"direction must be 'below' or 'above', not {direction!r}")
    n = len(As)
    stack = np.stack(As)
    eps = tol.eps_feas

    cut_vecs: list[np.ndarray] = []
    cuts_c: list[float] = []
    cuts_a: list[np.ndarray] = []
    best_f, best_p = -np.inf, None

    def evaluate(p):
        nonlocal best_f, best_p
        M = B - np.tensordot(p, stack, axes=1)
        w, V = np.linalg.eigh(herm(M))
        if w[0] > best_f:
            best_f, best_p = float(w[0]), p.copy()
        for v in _bottom_vectors(w, V).T:
            cut_vecs.append(v)
            cuts_c.append(float(np.real(np.vdot(v, B @ v))))
            cuts_a.append(np.real(np.einsum("i,kij,j->k", v.conj(), stack, v)))

    for i in range(n):
        evaluate(np.eye(n)[i])
    evaluate(np.full(n, 1.0 / n))

    upper = np.inf
    for it in range(1, tol.max_cut_iters + 1):
        if best_f >= -eps:
            return LMIResult(True, best_p, None, best_f, it)
        p, upper = _master_lp(np.array(cuts_c), np.array(cuts_a))
        if upper < -eps:
            mu = _dual_weights(np.array(cuts_c), np.array(cuts_a))
            rho = np.zeros_like(B)
            for m, v in zip(mu, cut_vecs):
                if m > 0:
                    rho += m * np.outer(v, v.conj())
            rho = herm(rho)
            rho /= np.real(np.trace(rho))
            # in the (possibly negated) "below" form for both directions
            gap = certificate_gap(rho, As, B, "below")
            if not gap > eps / 2:
                raise IndeterminateError(
                    f"certificate failed re-verification (gap {gap:.3e})", lower=best_f, upper=upper
                )
            return LMIResult(False, p, rho, upper, it)
        if upper - best_f <= 1e-13 * max(1.0, abs(upper)):
            break
        evaluate(p)
    raise IndeterminateError(
        "cutting-plane budget exhausted without a decision", lower=best_f, upper=upper
    )


def certificate_gap(rho, As: Sequence, B, direction: str = "below") -> float:
    """Separation achieved by a certificate; positive means it separates."""
    tB = float(np.real(np.trace(rho @ B)))
    tA = [float(np.real(np.trace(rho @ A))) for A in As]
    if direction == "below":
        return min(tA) - tB
    return tB - max(tA)
