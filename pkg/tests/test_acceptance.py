"""Acceptance criteria 1-9.  Each test prints one PASS/FAIL line in the summary."""

import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import nnls

from qref.detrefine import (
    check_transformer_algebra,
    doubled,
    refines_effect,
    refines_proj,
    sat_effect,
    sp_proj,
    wlp_proj,
    wp_proj,
)
from qref.linalg import Subspace, Tolerances
from qref.ndrefine import NProgram, nd_doubled, nd_refines_set, nd_sat, nd_single_formula_spec
from qref.oracles import grid_feasible, random_program, random_projector, refutation_search
from qref.predicates import EffectSet
from qref.programs import (
    Superoperator,
    choi,
    choi_equal,
    cp_order,
    cp_order_maps,
    pointwise_leq_sampled,
    transpose_map,
)
from qref.qwhile import compile_with_trace

from conftest import KET0, MINUS, PLUS, set0
from test_programs import choi_by_definition

ROOT = Path(__file__).resolve().parents[1]


def sub(v):
    return Subspace.span(np.asarray(v, dtype=complex).reshape(-1, 1), len(v))


def mixture(Ep, p):
    return Superoperator([np.sqrt(pi) * K for pi, E in zip(p, Ep) for K in E.kraus if pi > 0])


def strictly_below(a: Subspace, b: Subspace) -> bool:
    return a <= b and not a.equals(b)


# -- 1 -----------------------------------------------------------------------------


def _pair(d, rng, k):
    F = random_program(d, rng)
    if k % 3 == 0:
        return Superoperator(list(F.kraus[:1])), F
    if k % 3 == 1:
        return F.scaled(rng.uniform(0.2, 1.0)), F
    return random_program(d, rng), F


def test_1_effect_order_equals_cp_order():
    rng = np.random.default_rng(1)
    negatives = 0
    for d, n in ((2, 100), (4, 20)):
        for k in range(n):
            E, F = _pair(d, rng, k)
            v = refines_effect("total", E, F)
            assert v.holds == cp_order(E, F)[0]
            oracle = np.linalg.eigvalsh(choi_by_definition(F) - choi_by_definition(E))[0]
            assert v.holds == (oracle >= -1e-9)
            if not v.holds:
                negatives += 1
                w = v.witness
                assert sat_effect("total", doubled(E), w.pre, w.post)[0]
                ok, margin = sat_effect("total", doubled(F), w.pre, w.post)
                assert not ok and -margin >= 1e-7
    assert negatives > 0


# -- 2 -----------------------------------------------------------------------------


def test_2_counterexample_suite():
    I2 = Superoperator.identity(2)
    half, third = I2.scaled(0.5), I2.scaled(1 / 3)
    for kind in ("total", "partial"):
        assert refines_proj(kind, half, third).holds and refines_proj(kind, third, half).holds
    # each effect order holds one way only, and the two orders point in opposite
    # directions, so the pair is comparable in neither jointly
    tot = (refines_effect("total", half, third).holds, refines_effect("total", third, half).holds)
    par = (refines_effect("partial", half, third).holds, refines_effect("partial", third, half).holds)
    assert tot == (False, True) and par == (True, False)

    Z = Superoperator.zero(2)
    for p in (0.3, 0.5, 0.9):
        pI = I2.scaled(p)
        assert refines_proj("total", pI, Z).holds and refines_proj("total", Z, pI).holds
        assert refines_proj("partial", pI, I2).holds and refines_proj("partial", I2, pI).holds

    S = set0()
    assert sp_proj(S, sub(KET0) & sub(PLUS)).dim == 0
    assert sp_proj(S, sub(KET0)).equals(sub(KET0)) and sp_proj(S, sub(PLUS)).equals(sub(KET0))
    assert wp_proj(S, sub(PLUS)).dim == 0 and wp_proj(S, sub(MINUS)).dim == 0
    assert wp_proj(S, sub(PLUS) | sub(MINUS)).equals(Subspace.full(2))
    R = Subspace.zero(2)
    ZR = Superoperator([np.zeros((4, 4))])
    assert wlp_proj(ZR, sub(KET0).tensor(R)).equals(Subspace.full(4))
    assert wlp_proj(Z, sub(KET0)).tensor(R).dim == 0


# -- 3 -----------------------------------------------------------------------------


def test_3_galois_and_transformer_algebra():
    rng = np.random.default_rng(3)
    tol = Tolerances(eps_rank=1e-8)
    for d in (2, 4):
        for _ in range(50):
            E = random_program(d, rng, max_rank=int(rng.integers(1, d + 1)))
            P = random_projector(d, None, rng)
            Q = random_projector(d, None, rng)
            R = random_projector(2, None, rng)
            report = check_transformer_algebra(E, P, Q, R, tol)
            assert report.all_hold, [c.name for c in report.failed()]

    S = set0()
    P, Q = sub(KET0), sub(PLUS)
    assert strictly_below(sp_proj(S, P & Q), sp_proj(S, P) & sp_proj(S, Q))
    P, Q = sub(PLUS), sub(MINUS)
    assert strictly_below(wp_proj(S, P) | wp_proj(S, Q), wp_proj(S, P | Q))
    Z, R = Superoperator.zero(2), Subspace.zero(2)
    ZR = Superoperator([np.zeros((4, 4))])
    assert strictly_below(wlp_proj(Z, P).tensor(R), wlp_proj(ZR, P.tensor(R)))


# -- 4 -----------------------------------------------------------------------------


def _lmi_instance(k, rng):
    n = 2 + k % 2
    Es = [random_program(2, rng) for _ in range(n)]
    if k % 4 == 0:
        # a half-scaled mixture sits below F: feasible
        p = rng.dirichlet(np.ones(n))
        F = Superoperator(list(mixture(Es, p).scaled(0.5).kraus) + list(random_program(2, rng).scaled(0.5).kraus))
        return NProgram([E.scaled(0.5) for E in Es]), F, "total"
    if k % 4 == 1:
        p = rng.dirichlet(np.ones(n))
        return NProgram(Es), mixture(Es, p).scaled(0.5 + 0.5 * rng.random()), "partial"
    return NProgram(Es), random_program(2, rng), "total" if k % 4 == 2 else "partial"


def test_4_smyth_hoare_against_grid(E01, Eplus):
    rng = np.random.default_rng(4)
    seen = set()
    for k in range(50):
        Ep, F, kind = _lmi_instance(k, rng)
        v = nd_refines_set(kind, Ep, NProgram([F]))
        direction = "below" if kind == "total" else "above"
        assert v.holds == grid_feasible([choi(E) for E in Ep], choi(F), direction, 1e-3), k
        seen.add(v.holds)
    assert seen == {True, False}

    v = nd_refines_set("total", E01, NProgram([Eplus]))
    assert not v.holds
    cert = v.details["certificate"]
    rho = cert.state
    assert np.allclose(rho, rho.conj().T) and np.linalg.eigvalsh(rho)[0] >= -1e-9
    assert np.trace(rho).real == pytest.approx(1)
    JP = choi(Eplus)
    worst = min(np.trace(rho @ choi(E)).real for E in E01) - np.trace(rho @ JP).real
    assert worst > 0.5e-7 and worst == pytest.approx(cert.gap)

    assert refutation_search("tot-e", E01, NProgram([Eplus]), 500, 0) is None
    # M <= E0^dag(N) = <0|N|0>|0><0| and M <= E1^dag(N) = <1|N|1>|1><1| force both
    # diagonal entries of M, hence M itself, to vanish; the zeros are exact
    for _ in range(20):
        U = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
        N = U @ np.diag(rng.random(2)) @ U.conj().T
        X0, X1 = (E.kraus[0].conj().T @ N @ E.kraus[0] for E in E01)
        assert X0[1, 1] == 0 and X1[0, 0] == 0
        assert nd_sat("total", E01, EffectSet.of(np.zeros((2, 2))), EffectSet.of(N))
        for eps in (1e-3, 1e-6):
            for M in (eps * np.eye(2), eps * np.diag([1.0, 0.0]), eps * np.diag([0.0, 1.0])):
                assert not nd_sat("total", E01, EffectSet.of(M), EffectSet.of(N))


# -- 5 -----------------------------------------------------------------------------


def test_5_single_formula_nondeterministic():
    rng = np.random.default_rng(5)
    outcomes = {"total": set(), "partial": set()}
    for k in range(50):
        Ep = NProgram([random_program(2, rng) for _ in range(1 + k % 3)])
        if k % 2 == 0:
            Fp = NProgram([mixture(Ep, rng.dirichlet(np.ones(len(Ep))))])
        else:
            Fp = NProgram([random_program(2, rng) for _ in range(1 + k % 2)])
        for kind in ("total", "partial"):
            A, B = (Ep, Fp) if k % 4 < 2 else (Fp, Ep)
            verdict = nd_refines_set(kind, A, B).holds
            spec = nd_single_formula_spec(kind, A)
            assert nd_sat(kind, nd_doubled(A), spec.pre, spec.post)
            assert nd_sat(kind, nd_doubled(B), spec.pre, spec.post) == verdict, (k, kind)
            outcomes[kind].add(verdict)
    assert outcomes["total"] == {True, False} and outcomes["partial"] == {True, False}


# -- 6 -----------------------------------------------------------------------------


def _in_hull(Js, J, tol=1e-7):
    A = np.vstack([np.stack([np.concatenate([x.real.ravel(), x.imag.ravel()]) for x in Js], axis=1),
                   np.ones((1, len(Js)))])
    b = np.concatenate([J.real.ravel(), J.imag.ravel(), [1.0]])
    _, res = nnls(A, b)
    return res < tol


def _rekraus(E, rng):
    # same channel, different Kraus operators: mix with a random unitary
    K = np.stack(E.kraus)
    m = len(K) + 1
    K = np.concatenate([K, np.zeros((1,) + K.shape[1:])])
    U = np.linalg.qr(rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m)))[0]
    return Superoperator(list(np.einsum("ij,jab->iab", U, K)))


def test_6_trace_preserving_collapse():
    rng = np.random.default_rng(6)
    for k in range(50):
        E = random_program(2, rng, tp=True)
        F = _rekraus(E, rng) if k % 2 == 0 else random_program(2, rng, tp=True)
        tot, par = refines_effect("total", E, F).holds, refines_effect("partial", E, F).holds
        assert tot == par == choi_equal(E, F)

        Ep = NProgram([random_program(2, rng, tp=True) for _ in range(2)])
        if k % 2 == 0:
            Fp = NProgram([mixture(Ep, rng.dirichlet([1, 1])), Ep.generators[k % 4 // 2]])
        else:
            Fp = NProgram([random_program(2, rng, tp=True)])
        tot, par = nd_refines_set("total", Ep, Fp).holds, nd_refines_set("partial", Ep, Fp).holds
        inclusion = all(_in_hull([choi(E) for E in Ep], choi(F)) for F in Fp)
        assert tot == par == inclusion, k


# -- 7 -----------------------------------------------------------------------------


def test_7_pointwise_versus_complete_positivity():
    T = transpose_map(2)
    res = pointwise_leq_sampled(Superoperator.zero(2), T, n=1000, seed=7)
    assert res.holds and res.samples == 1000
    holds, margin = cp_order_maps(Superoperator.zero(2), T)
    assert not holds
    assert np.linalg.eigvalsh(T.choi())[0] == pytest.approx(-0.5, abs=1e-9)
    assert margin == pytest.approx(-0.5, abs=1e-9)


# -- 8 -----------------------------------------------------------------------------


def test_8_compiler():
    tol = Tolerances(eps_psd=1e-9)
    res = compile_with_trace("while meas(P1){q0} do X[q0] end", 1)
    assert res.iterations == 2
    assert cp_order(res.program, set0(), tol)[0] and cp_order(set0(), res.program, tol)[0]

    div = compile_with_trace("while meas(I){q0} do skip end", 1)
    assert np.allclose(choi(div.program), 0, atol=1e-12)
    rng = np.random.default_rng(8)
    for _ in range(20):
        G = random_program(2, rng)
        assert refines_effect("partial", G, div.program).holds
        assert refines_effect("total", div.program, G).holds


# -- 9 -----------------------------------------------------------------------------

_SEEDED = """
import json, sys
import numpy as np
from qref.ndrefine import nd_weaker_order_demo
from qref.oracles import random_program, refutation_search, sample_density
from qref.programs import Superoperator
from qref.serialize import dumps, to_jsonable, program_to_json
I2 = Superoperator.identity(2)
out = {
    "demo": nd_weaker_order_demo(n_draws=50, n_states=8, seed=9),
    "refute": refutation_search("tot-e", I2, I2.scaled(0.5), 50, 9),
    "program": program_to_json(random_program(3, 9)),
    "rho": sample_density(3, "mixed", 9),
}
sys.stdout.write(dumps(to_jsonable(out)))
"""


def _cli_transcript(tmp: Path) -> bytes:
    env = dict(os.environ, PYTHONHASHSEED="0")

    def qref(*argv):
        p = subprocess.run([sys.executable, "-m", "qref.cli", *map(str, argv)], cwd=tmp,
                           capture_output=True, env=env)
        return b"$ " + " ".join(map(str, argv)).encode() + b"\n" + p.stdout + p.stderr + b"%d\n" % p.returncode

    (tmp / "reset.qw").write_text("while meas(P1){q0} do X[q0] end\n")
    chunks = [
        qref("oracle", "random-program", "--dim", "2", "--seed", "11"),
        qref("oracle", "sample", "--dim", "2", "--seed", "11", "--json"),
        qref("compile", "reset.qw", "-o", "reset.json"),
        qref("compile", "reset.qw", "--json"),
    ]
    for seed, name in ((11, "a.json"), (12, "b.json")):
        (tmp / name).write_bytes(subprocess.run(
            [sys.executable, "-m", "qref.cli", "oracle", "random-program", "--dim", "2", "--seed", str(seed)],
            capture_output=True, env=env).stdout)
    for order in ("cp", "tot-e", "par-e", "tot-p", "par-p", "tot-s", "par-s"):
        chunks.append(qref("check", order, "a.json", "b.json", "--json"))
        chunks.append(qref("check", order, "reset.json", "a.json"))
    chunks.append(qref("witness", "tot-s", "a.json", "b.json"))
    chunks.append(qref("oracle", "refute", "tot-e", "a.json", "b.json", "--samples", "100", "--seed", "5", "--json"))
    chunks.append(qref("oracle", "grid", "a.json", "b.json", "--json"))
    chunks.append(qref("validate", "a.json", "b.json", "reset.json", "--jobs", "3"))
    chunks.append(qref("check", "tot-e", "missing.json", "a.json"))
    return b"".join(chunks)


def _suite_outcomes() -> list[str]:
    p = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-rA", "-p", "no:cacheprovider", "--ignore",
         str(ROOT / "tests" / "test_acceptance.py"), str(ROOT / "tests")],
        cwd=ROOT, capture_output=True, text=True,
    )
    return sorted(line for line in p.stdout.splitlines() if line.startswith(("PASSED", "FAILED", "ERROR")))


def test_9_determinism(tmp_path):
    env = dict(os.environ, PYTHONHASHSEED="0")
    seeded = [subprocess.run([sys.executable, "-c", _SEEDED], capture_output=True, env=env, check=True).stdout
              for _ in range(2)]
    assert seeded[0] == seeded[1]
    json.loads(seeded[0])

    runs = []
    for r in range(2):
        d = tmp_path / f"run{r}"
        d.mkdir()
        runs.append(_cli_transcript(d))
    assert runs[0] == runs[1]
    assert b"reset.json" in runs[0]

    first, second = _suite_outcomes(), _suite_outcomes()
    assert first and first == second
    assert not any(line.startswith(("FAILED", "ERROR")) for line in first)
