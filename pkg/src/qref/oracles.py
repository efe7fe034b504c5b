"""Brute-force and sampling oracles, independent of the engine's decision paths.

Everything here takes a ``seed`` that may be an integer or an existing
``numpy.random.Generator``; the same integer seed gives the same stream.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from qref.linalg import DEFAULT_TOL, Subspace, Tolerances, herm, loewner_leq, spec_norm


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _ginibre(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def sample_density(d: int, kind: str = "mixed", seed=None) -> np.ndarray:
    """Random density operator.

    ``pure``: normalized Gaussian vector.  ``mixed``: ``G G^dag / tr``.
    ``partial``: a mixed state scaled by a uniform factor in (0, 1].
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    rng = _rng(seed)
    if kind == "pure":
        v = _ginibre(rng, d)
        v /= np.linalg.norm(v)
        return np.outer(v, v.conj())
    if kind in ("mixed", "partial"):
        G = _ginibre(rng, (d, d))
        rho = herm(G @ G.conj().T)
        rho /= np.real(np.trace(rho))
        if kind == "partial":
            rho *= 1.0 - rng.random()
        return rho
    raise ValueError(f"unknown state kind {kind!r}")


def random_effect(d: int, seed=None, rank: int | None = None) -> np.ndarray:
    """Random effect ``0 <= M <= I``: random eigenbasis, uniform eigenvalues."""
    rng = _rng(seed)
    U, _ = np.linalg.qr(_ginibre(rng, (d, d)))
    lam = rng.random(d)
    if rank is not None:
        lam[rank:] = 0.0
    return herm((U * lam) @ U.conj().T)


def random_projector(d: int, rank: int | None = None, seed=None) -> np.ndarray:
    rng = _rng(seed)
    if rank is None:
        rank = int(rng.integers(0, d + 1))
    U, _ = np.linalg.qr(_ginibre(rng, (d, d)))
    V = U[:, :rank]
    return V @ V.conj().T


def random_subspace(d: int, rank: int | None = None, seed=None) -> Subspace:
    return Subspace.from_projector(random_projector(d, rank, seed))


def random_program(d: int, seed=None, max_rank: int | None = None, tp: bool = False):
    """Random CPTN (or CPTP when ``tp``) map with a random Kraus rank."""
    from qref.programs import random_cptn, random_cptp

    rng = _rng(seed)
    rank = int(rng.integers(1, (max_rank or d) + 1))
    return random_cptp(d, rank, rng) if tp else random_cptn(d, rank, rng)


# -- simplex grid search --------------------------------------------------------


def simplex_grid(n: int, step: float) -> np.ndarray:
    """All points of the ``n``-simplex with coordinates on multiples of ``step``."""
    m = int(round(1.0 / step))
    if n == 1:
        return np.ones((1, 1))
    pts = [c for c in itertools.combinations_with_replacement(range(n), m)]
    grid = np.zeros((len(pts), n))
    for r, c in enumerate(pts):
        np.add.at(grid[r], list(c), 1.0)
    return grid / m


def _simplex_grid_fast(n: int, step: float) -> np.ndarray:
    m = int(round(1.0 / step))
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        a = np.arange(m + 1)
        return np.stack([a, m - a], axis=1) / m
    if n == 3:
        a, b = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        keep = a + b <= m
        a, b = a[keep], b[keep]
        return np.stack([a, b, m - a - b], axis=1) / m
    return simplex_grid(n, step)


def grid_feasible(As, B, direction: str = "below", step: float = 1e-3,
                  tol: Tolerances = DEFAULT_TOL, chunk: int = 4096) -> bool:
    """Exhaustive simplex grid for ``sum p_i A_i <= B`` (or ``>=``).

    Feasible iff some grid point has ``lambda_min >= -eps_feas - step * L``
    with ``L`` the largest spectral norm among ``As`` (Lipschitz slack).
    """
    As = [herm(A) for A in As]
    if not 1 <= len(As) <= 3:
        raise ValueError("grid_feasible supports 1 to 3 generators")
    if step < 1e-3:
        raise ValueError("grid step below 1e-3 is not supported")
    B = herm(B)
    sign = 1.0 if direction == "below" else -1.0
    if direction not in ("below", "above"):
        raise ValueError(f"direction must be 'below' or 'above', not {direction!r}")
    stack = np.stack(As)
    L = max(spec_norm(A) for A in As)
    threshold = -tol.eps_feas - step * L
    grid = _simplex_grid_fast(len(As), step)
    for start in range(0, len(grid), chunk):
        P = grid[start:start + chunk]
        M = sign * (B[None] - np.tensordot(P, stack, axes=1))
        if np.linalg.eigvalsh(M)[:, 0].max() >= threshold:
            return True
    return False


# -- refutation search ----------------------------------------------------------


@dataclass
class Counterexample:
    order: str
    space: str  # "declared" or "doubled"
    spec: Any
    detail: dict = field(default_factory=dict)


def _lift(P):
    from qref.ndrefine import NProgram

    return NProgram.lift(P)


def _max_scale(M0: np.ndarray, Xs) -> float:
    """Largest ``t`` in [0, 1] with ``t M0 <= X`` for every ``X`` (``M0 > 0``)."""
    w, V = np.linalg.eigh(herm(M0))
    inv_half = (V / np.sqrt(w)) @ V.conj().T
    t = 1.0
    for X in Xs:
        t = min(t, float(np.linalg.eigvalsh(herm(inv_half @ X @ inv_half))[0]))
    return max(t, 0.0)


def _effect_specs(Ep, kind: str, d: int, rng: np.random.Generator):
    """Strongest sampled specification ``(t M0, N)`` met by every generator of ``Ep``."""
    from qref.detrefine import wlp_effect, wp_effect

    N = random_effect(d, rng)
    M0 = random_effect(d, rng)
    M0 = 0.5 * (M0 + 1e-3 * np.eye(d)) / (1 + 1e-3)
    xp = wp_effect if kind == "total" else wlp_effect
    t = _max_scale(M0, [xp(E, N) for E in Ep]) * (1 - 1e-6)
    return t * M0, N


def _effect_sat(Ep, kind: str, M, N, tol: Tolerances) -> tuple[bool, float]:
    from qref.detrefine import wlp_effect, wp_effect

    xp = wp_effect if kind == "total" else wlp_effect
    margin = min(loewner_leq(M, xp(E, N), tol)[1] for E in Ep)
    return margin >= -tol.eps_psd * max(1.0, spec_norm(M)), margin


def refutation_search(order: str, left, right, n: int = 500, seed=0,
                      tol: Tolerances = DEFAULT_TOL) -> Counterexample | None:
    """Try to refute ``left <= right`` by sampling specifications.

    Each draw builds a specification met by ``left`` from the raw
    satisfaction definitions and checks it on ``right``.  Effect and
    projector orders sample on the declared space and on the space doubled
    by a reference copy (alternating).  Sound for refutation only: ``None``
    means no counterexample was found in ``n`` draws.
    """
    from qref.detrefine import doubled
    from qref.ndrefine import NProgram, nd_sat, wlp_proj_nd, wlp_set, wp_proj_nd, wp_set
    from qref.linalg import subspace_op
    from qref.predicates import EffectSet

    rng = _rng(seed)
    Ep, Fp = _lift(left), _lift(right)
    d = Ep.dim
    kind = {"t": "total", "p": "partial"}[order[0]] if order != "cp" else "total"
    flavor = "e" if order == "cp" else order.split("-")[1]
    if flavor not in ("e", "p", "s"):
        raise ValueError(f"unknown order tag {order!r}")
    dd = {"declared": (Ep, Fp), "doubled": (NProgram([doubled(E) for E in Ep]),
                                            NProgram([doubled(F) for F in Fp]))}
    for k in range(n):
        space = "declared" if k % 2 == 0 else "doubled"
        L, R = dd[space]
        D = L.dim
        if flavor == "e":
            M, N = _effect_specs(L, kind, D, rng)
            ok, margin = _effect_sat(R, kind, M, N, tol)
            if not ok:
                return Counterexample(order, space, (M, N), {"draw": k, "margin": margin})
        elif flavor == "p":
            Q = random_subspace(D, seed=rng)
            xp = wp_proj_nd if kind == "total" else wlp_proj_nd
            P = xp(L, Q, tol)
            if not subspace_op("leq", P, xp(R, Q, tol), tol):
                return Counterexample(order, space, (P, Q), {"draw": k})
        else:
            m = int(rng.integers(1, 3))
            Psi = EffectSet(D, [random_effect(D, rng) for _ in range(m)])
            Theta = wp_set(L, Psi) if kind == "total" else wlp_set(L, Psi)
            if not nd_sat(kind, R, Theta, Psi, tol):
                return Counterexample(order, space, (Theta, Psi), {"draw": k})
    return None
