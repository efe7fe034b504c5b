import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qref.errors import InvalidProgramError, NonConvergenceError, ParseError
from qref.linalg import Tolerances, lambda_min, max_entangled
from qref.programs import Superoperator, choi, choi_equal, compose, cp_order, validate_cptn
from qref.qwhile import (
    Abort,
    IfMeas,
    Init,
    Seq,
    Skip,
    Unitary,
    WhileMeas,
    compile,
    compile_with_trace,
    embed_operator,
    parse,
    pretty,
)

from conftest import set0

RESET = "while meas(P1){q0} do X[q0] end"
DIVERGE = "while meas(I){q0} do skip end"


def test_parse_basic_nodes():
    assert parse("skip") == Skip()
    assert parse("abort") == Abort()
    assert parse("q[2] := 0") == Init(2)
    assert parse("q2 := 0") == Init(2)
    assert parse("X[q0]; X[q0]") == Seq(Unitary("X", (0,)), Unitary("X", (0,)))
    node = parse(RESET)
    assert isinstance(node, WhileMeas) and node.projector == "P1" and node.qubits == (0,)
    node = parse("if meas(P0){q[1]} then skip else abort end")
    assert isinstance(node, IfMeas) and node.qubits == (1,)


def test_canonical_round_trip():
    for src in (RESET, DIVERGE, "CX[q0, q1]; H[q1]", "q[0] := 0; [[0, 1], [1, 0]][q1]",
                "if meas([[0.5, 0.5], [0.5, 0.5]]){q0} then S[q0] else Y[q0]; Z[q0] end"):
        ast = parse(src)
        assert parse(pretty(ast)) == ast
        assert pretty(parse(pretty(ast))) == pretty(ast)
    assert pretty(parse(RESET)) == RESET


@pytest.mark.parametrize("src, line, col", [
    ("X[q0", 1, 5),
    ("CX[q0]", 1, 1),
    ("skip;\n  foo", 2, 3),
    ("while meas(P1){q0} do X[q0]", 1, 28),
    ("X[q0, q0]", 1, 3),
    ("q[0] := 1", 1, 9),
    ("skip $", 1, 6),
    ("if meas(P7){q0} then skip else skip end", 1, 9),
    ("[[1, 1], [0, 1]][q0]", 1, 1),
])
def test_parse_errors_have_positions(src, line, col):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert (info.value.line, info.value.col) == (line, col)


def test_comments_and_whitespace():
    assert parse("# reset\nskip ; # done\n") == Skip()


def test_compile_skip_abort():
    assert np.allclose(choi(compile("skip", 1)), max_entangled(2))
    assert np.allclose(choi(compile("abort", 1)), 0)


def test_compile_reset_loop():
    res = compile_with_trace(RESET, 1)
    assert res.iterations == 2
    assert cp_order(res.program, set0())[0] and cp_order(set0(), res.program)[0]
    assert all(d >= 0 for d in res.loops[0].deltas)
    assert res.loops[0].worst_monotone_margin >= -1e-9


def test_compile_diverging_loop():
    res = compile_with_trace(DIVERGE, 1)
    assert res.iterations == 0
    assert np.allclose(choi(res.program), 0)


def test_init_is_set0():
    assert choi_equal(compile("q[0] := 0", 1), set0())


def test_embedding_convention():
    X = np.array([[0, 1], [1, 0]])
    assert np.allclose(embed_operator(X, [0], 2), np.kron(X, np.eye(2)))
    assert np.allclose(embed_operator(X, [1], 2), np.kron(np.eye(2), X))
    CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    # control on q1, target on q0
    E = compile("CX[q1, q0]", 2)
    ket = np.zeros(4)
    ket[1] = 1  # |q0 q1> = |01>
    out = E(np.outer(ket, ket))
    assert out[3, 3] == pytest.approx(1)
    assert np.allclose(embed_operator(CX, [0, 1], 2), CX)


def test_compile_if():
    E = compile("if meas(P1){q0} then X[q0] else skip end", 1)
    assert choi_equal(E, set0())


def test_compositionality():
    a, b = "H[q0]; CX[q0, q1]", "if meas(Pp){q1} then Z[q0] else q[1] := 0 end"
    Ea, Eb = compile(a, 2), compile(b, 2)
    assert choi_equal(compile(f"{a}; {b}", 2), compose(Ea, Eb))


def test_trace_preservation_of_terminating_programs():
    E = compile("H[q0]; while meas(P1){q0} do H[q0] end", 1)
    assert validate_cptn(E)[1]


def test_register_errors():
    with pytest.raises(InvalidProgramError):
        compile("X[q3]", 2)
    with pytest.raises(InvalidProgramError):
        compile("skip", 9)


def test_nonconvergence():
    # loop exits with probability 1/2 per round; the tail never reaches 1e-10 in 3 steps
    with pytest.raises(NonConvergenceError) as info:
        compile("while meas(P1){q0} do H[q0] end", 1, Tolerances(max_fix_iters=3))
    assert info.value.delta > 0


def test_monotone_iterates_for_nested_loops():
    res = compile_with_trace("while meas(P1){q0} do H[q0]; while meas(P1){q1} do X[q1] end end", 2)
    assert len(res.loops) == 2
    assert all(t.worst_monotone_margin >= -1e-9 for t in res.loops)
    assert validate_cptn(res.program)[0]


_leaf = st.sampled_from(["skip", "abort", "X[q0]", "H[q1]", "CX[q0, q1]", "q[1] := 0", "S[q0]"])


def _programs():
    return st.recursive(
        _leaf,
        lambda inner: st.one_of(
            st.tuples(inner, inner).map(lambda t: f"{t[0]}; {t[1]}"),
            st.tuples(st.sampled_from(["P0", "P1", "Pp", "Pm"]), inner, inner).map(
                lambda t: f"if meas({t[0]}){{q0}} then {t[1]} else {t[2]} end"),
        ),
        max_leaves=6,
    )


@settings(max_examples=40, deadline=None)
@given(_programs())
def test_random_programs_round_trip_and_compile(src):
    ast = parse(src)
    assert parse(pretty(ast)) == ast
    E = compile(ast, 2)
    assert validate_cptn(E)[0]
    assert lambda_min(choi(E)) > -1e-9
