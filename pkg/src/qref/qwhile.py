"""A minimal quantum while-language and its compiler to super-operators.

Grammar (statements are separated by ``;``, ``#`` starts a comment)::

    S ::= skip | abort | q[i] := 0 | G[q, ...] | M[q, ...]
        | S ; S
        | if meas(P){q, ...} then S else S end
        | while meas(P){q, ...} do S end

``G`` is one of ``X Y Z S H CX`` (``CX`` takes control then target), ``M``
an inline matrix literal such as ``[[0, 1], [1, 0]]`` with entries written
as Python complex literals (``0.5``, ``-1j``, ``0.5+0.5j``).  Qubits are
written ``q0`` or ``q[0]``.  ``P`` is one of the named projectors
``I O P0 P1 Pp Pm`` (``I`` and ``O`` at any arity) or a matrix literal.

Qubit 0 is the leftmost (most significant) tensor factor of the register.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from qref.errors import InvalidProgramError, NonConvergenceError, ParseError
from qref.linalg import DEFAULT_TOL, Tolerances, dagger, spec_norm
from qref.programs import Superoperator, add, compose

MAX_REGISTER = 8

_S2 = 1 / np.sqrt(2)
GATES = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "CX": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}

PROJECTORS = {
    "P0": np.array([[1, 0], [0, 0]], dtype=complex),
    "P1": np.array([[0, 0], [0, 1]], dtype=complex),
    "Pp": np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex),
    "Pm": np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex),
}

KEYWORDS = {"skip", "abort", "if", "then", "else", "end", "while", "do", "meas"}


# -- syntax tree ----------------------------------------------------------------


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Abort:
    pass


@dataclass(frozen=True)
class Init:
    qubit: int


@dataclass(frozen=True, eq=False)
class Unitary:
    gate: Union[str, np.ndarray]
    qubits: tuple

    def matrix(self) -> np.ndarray:
        return GATES[self.gate] if isinstance(self.gate, str) else self.gate

    def __eq__(self, other):
        if not isinstance(other, Unitary) or self.qubits != other.qubits:
            return False
        if isinstance(self.gate, str) or isinstance(other.gate, str):
            return isinstance(self.gate, str) and self.gate == other.gate
        return np.array_equal(self.gate, other.gate)


@dataclass(frozen=True)
class Seq:
    first: object
    second: object


@dataclass(frozen=True, eq=False)
class _Measured:
    projector: Union[str, np.ndarray]
    qubits: tuple

    def projector_matrix(self) -> np.ndarray:
        P = self.projector
        k = len(self.qubits)
        if isinstance(P, str):
            if P == "I":
                return np.eye(2 ** k, dtype=complex)
            if P == "O":
                return np.zeros((2 ** k, 2 ** k), dtype=complex)
            return PROJECTORS[P]
        return P

    def _same_projector(self, other) -> bool:
        a, b = self.projector, other.projector
        if isinstance(a, str) or isinstance(b, str):
            return isinstance(a, str) and a == b
        return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class IfMeas(_Measured):
    then_branch: object = None
    else_branch: object = None

    def __eq__(self, other):
        return (isinstance(other, IfMeas) and self.qubits == other.qubits and self._same_projector(other)
                and self.then_branch == other.then_branch and self.else_branch == other.else_branch)


@dataclass(frozen=True, eq=False)
class WhileMeas(_Measured):
    body: object = None

    def __eq__(self, other):
        return (isinstance(other, WhileMeas) and self.qubits == other.qubits
                and self._same_projector(other) and self.body == other.body)


# -- lexer ------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<assign>:=)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?[jJ]?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[;\[\]{}(),+\-])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            tokens.append(Token(kind if kind != "punct" else s, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- parser -----------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    def advance(self) -> Token:
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or "end of input"
            self.error(f"expected {want!r}, found {got!r}")
        return self.advance()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text == word

    # program ::= seq eof
    def program(self):
        node = self.seq(stop=())
        if self.peek().kind != "eof":
            self.error(f"unexpected {self.peek().text!r}")
        return node

    def seq(self, stop: tuple):
        stmts = [self.statement()]
        while self.peek().kind == ";":
            self.advance()
            if self.peek().kind == "eof" or any(self.at_keyword(w) for w in stop):
                break
            stmts.append(self.statement())
        node = stmts[-1]
        for s in reversed(stmts[:-1]):
            node = Seq(s, node)
        return node

    def qubit(self) -> int:
        tok = self.expect("ident")
        m = re.fullmatch(r"q(\d+)", tok.text)
        if m:
            return int(m.group(1))
        if tok.text == "q" and self.peek().kind == "[":
            self.advance()
            n = self.expect("number")
            if not re.fullmatch(r"\d+", n.text):
                self.error("qubit index must be a non-negative integer", n)
            self.expect("]")
            return int(n.text)
        self.error(f"expected a qubit such as q0 or q[0], found {tok.text!r}", tok)

    def qubit_list(self, close: str) -> tuple:
        start = self.peek()
        qs = [self.qubit()]
        while self.peek().kind == ",":
            self.advance()
            qs.append(self.qubit())
        self.expect(close)
        if len(set(qs)) != len(qs):
            self.error("repeated qubit in operand list", start)
        return tuple(qs)

    def number(self) -> complex:
        sign = 1.0
        if self.peek().kind in ("+", "-"):
            sign = -1.0 if self.advance().kind == "-" else 1.0
        tok = self.expect("number")
        val = sign * complex(tok.text)
        # a + bj
        if self.peek().kind in ("+", "-") and self.peek(1).kind == "number" and self.peek(1).text[-1] in "jJ":
            s = -1.0 if self.advance().kind == "-" else 1.0
            val += s * complex(self.advance().text)
        return val

    def matrix(self) -> np.ndarray:
        start = self.expect("[")
        rows = []
        while True:
            self.expect("[")
            row = [self.number()]
            while self.peek().kind == ",":
                self.advance()
                row.append(self.number())
            self.expect("]")
            rows.append(row)
            if self.peek().kind == ",":
                self.advance()
                continue
            self.expect("]")
            break
        n = len(rows)
        if any(len(r) != n for r in rows):
            self.error("matrix literal must be square", start)
        if n & (n - 1) or n < 2:
            self.error("matrix literal dimension must be a power of two", start)
        return np.array(rows, dtype=complex)

    def statement(self):
        tok = self.peek()
        if tok.kind == "[":
            U = self.matrix()
            self.expect("[")
            qs = self.qubit_list("]")
            self._check_arity(U.shape[0], qs, tok)
            if spec_norm(dagger(U) @ U - np.eye(U.shape[0])) > 1e-9:
                self.error("matrix literal is not unitary", tok)
            return Unitary(U, qs)
        if tok.kind != "ident":
            self.error(f"expected a statement, found {tok.text or 'end of input'!r}")
        word = tok.text
        if word == "skip":
            self.advance()
            return Skip()
        if word == "abort":
            self.advance()
            return Abort()
        if word == "if":
            self.advance()
            P, qs = self.measurement()
            self.expect("ident", "then")
            s1 = self.seq(stop=("else",))
            self.expect("ident", "else")
            s0 = self.seq(stop=("end",))
            self.expect("ident", "end")
            return IfMeas(P, qs, s1, s0)
        if word == "while":
            self.advance()
            P, qs = self.measurement()
            self.expect("ident", "do")
            body = self.seq(stop=("end",))
            self.expect("ident", "end")
            return WhileMeas(P, qs, body)
        if word in GATES:
            self.advance()
            self.expect("[")
            qs = self.qubit_list("]")
            self._check_arity(GATES[word].shape[0], qs, tok)
            return Unitary(word, qs)
        if re.fullmatch(r"q\d*", word):
            q = self.qubit()
            self.expect("assign")
            z = self.expect("number")
            if z.text != "0":
                self.error("only initialization to 0 is supported", z)
            return Init(q)
        self.error(f"unknown statement {word!r}")

    def measurement(self):
        self.expect("ident", "meas")
        self.expect("(")
        tok = self.peek()
        if tok.kind == "[":
            P = self.matrix()
        else:
            name = self.expect("ident").text
            if name not in PROJECTORS and name not in ("I", "O"):
                self.error(f"unknown projector {name!r}", tok)
            P = name
        self.expect(")")
        self.expect("{")
        qs = self.qubit_list("}")
        if isinstance(P, str):
            if P in PROJECTORS:
                self._check_arity(2, qs, tok)
        else:
            self._check_arity(P.shape[0], qs, tok)
            if spec_norm(P - dagger(P)) > 1e-9 or spec_norm(P @ P - P) > 1e-9:
                self.error("matrix literal is not a projector", tok)
        return P, qs

    def _check_arity(self, dim: int, qs: tuple, tok: Token):
        if 2 ** len(qs) != dim:
            self.error(f"operator of dimension {dim} applied to {len(qs)} qubit(s)", tok)


def parse(text: str):
    """Parse program text into a syntax tree; errors carry line and column."""
    return _Parser(text).program()


# -- pretty printer ---------------------------------------------------------------


def _fmt_num(z: complex) -> str:
    re_, im = z.real, z.imag
    if im == 0:
        return format(re_, ".17g")
    if re_ == 0:
        return format(im, ".17g") + "j"
    sign = "-" if im < 0 else "+"
    return f"{re_:.17g}{sign}{abs(im):.17g}j"


def _fmt_matrix(A: np.ndarray) -> str:
    return "[" + ", ".join("[" + ", ".join(_fmt_num(complex(z)) for z in row) + "]" for row in A) + "]"


def _fmt_qubits(qs) -> str:
    return ", ".join(f"q{q}" for q in qs)


def pretty(node) -> str:
    """Canonical text form; ``parse(pretty(ast)) == ast``."""
    if isinstance(node, Skip):
        return "skip"
    if isinstance(node, Abort):
        return "abort"
    if isinstance(node, Init):
        return f"q[{node.qubit}] := 0"
    if isinstance(node, Unitary):
        g = node.gate if isinstance(node.gate, str) else _fmt_matrix(node.gate)
        return f"{g}[{_fmt_qubits(node.qubits)}]"
    if isinstance(node, Seq):
        return f"{pretty(node.first)}; {pretty(node.second)}"
    if isinstance(node, (IfMeas, WhileMeas)):
        P = node.projector if isinstance(node.projector, str) else _fmt_matrix(node.projector)
        head = f"meas({P}){{{_fmt_qubits(node.qubits)}}}"
        if isinstance(node, IfMeas):
            return f"if {head} then {pretty(node.then_branch)} else {pretty(node.else_branch)} end"
        return f"while {head} do {pretty(node.body)} end"
    raise TypeError(f"not a program node: {node!r}")


# -- compiler ---------------------------------------------------------------------


def embed_operator(A, qubits: Sequence[int], n: int) -> np.ndarray:
    """Lift an operator on ``qubits`` to the ``n``-qubit register."""
    A = np.asarray(A, dtype=complex)
    k = len(qubits)
    others = [q for q in range(n) if q not in qubits]
    order = list(qubits) + others
    full = np.kron(A, np.eye(2 ** (n - k))).reshape((2,) * (2 * n))
    inv = np.argsort(order)
    axes = list(inv) + [n + a for a in inv]
    return full.transpose(axes).reshape(2 ** n, 2 ** n)


def compress(E: Superoperator, tol: Tolerances = DEFAULT_TOL) -> Superoperator:
    """Minimal Kraus list with the same Choi matrix (SVD of the stacked vecs)."""
    d = E.dim
    V = np.stack([K.reshape(-1) for K in E.kraus], axis=1)
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    w = s ** 2
    keep = w > 1e-3 * tol.eps_psd * max(1.0, float(w[0]) if w.size else 0.0)
    if not keep.any():
        return Superoperator.zero(d)
    return Superoperator([(U[:, k] * s[k]).reshape(d, d) for k in np.nonzero(keep)[0]])


def _choi_diff_spectrum(A: Superoperator, B: Superoperator) -> np.ndarray:
    # nonzero eigenvalues of J(A) - J(B), via a QR of the stacked vecs
    Va = np.stack([K.reshape(-1) for K in A.kraus], axis=1)
    Vb = np.stack([K.reshape(-1) for K in B.kraus], axis=1)
    W = np.concatenate([Va, Vb], axis=1)
    _, R = np.linalg.qr(W)
    S = np.concatenate([np.ones(Va.shape[1]), -np.ones(Vb.shape[1])])
    M = (R * S) @ dagger(R)
    return np.linalg.eigvalsh((M + dagger(M)) / 2) / A.dim


@dataclass
class LoopTrace:
    iterations: int
    deltas: list = field(default_factory=list)
    worst_monotone_margin: float = 0.0


@dataclass
class CompileResult:
    program: Superoperator
    loops: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        """Fixpoint iterations of the first loop (0 when there is none)."""
        return self.loops[0].iterations if self.loops else 0


def _max_qubit(node) -> int:
    if isinstance(node, Init):
        return node.qubit
    if isinstance(node, Unitary):
        return max(node.qubits)
    if isinstance(node, Seq):
        return max(_max_qubit(node.first), _max_qubit(node.second))
    if isinstance(node, IfMeas):
        return max(max(node.qubits), _max_qubit(node.then_branch), _max_qubit(node.else_branch))
    if isinstance(node, WhileMeas):
        return max(max(node.qubits), _max_qubit(node.body))
    return -1


class _Compiler:
    def __init__(self, n: int, tol: Tolerances):
        self.n = n
        self.d = 2 ** n
        self.tol = tol
        self.loops: list[LoopTrace] = []

    def lift(self, A, qubits) -> np.ndarray:
        for q in qubits:
            if q >= self.n:
                raise InvalidProgramError(f"qubit q{q} outside a register of {self.n} qubits")
        return embed_operator(A, qubits, self.n)

    def branch_maps(self, node):
        P = self.lift(node.projector_matrix(), node.qubits)
        return Superoperator([P]), Superoperator([np.eye(self.d) - P])

    def run(self, node) -> Superoperator:
        d = self.d
        if isinstance(node, Skip):
            return Superoperator.identity(d)
        if isinstance(node, Abort):
            return Superoperator.zero(d)
        if isinstance(node, Init):
            k0 = np.array([[1, 0], [0, 0]], dtype=complex)
            k1 = np.array([[0, 1], [0, 0]], dtype=complex)
            return Superoperator([self.lift(k0, [node.qubit]), self.lift(k1, [node.qubit])])
        if isinstance(node, Unitary):
            return Superoperator([self.lift(node.matrix(), node.qubits)])
        if isinstance(node, Seq):
            return compress(compose(self.run(node.first), self.run(node.second)), self.tol)
        if isinstance(node, IfMeas):
            yes, no = self.branch_maps(node)
            s1, s0 = self.run(node.then_branch), self.run(node.else_branch)
            return compress(add(compose(yes, s1), compose(no, s0)), self.tol)
        if isinstance(node, WhileMeas):
            return self.loop(node)
        raise TypeError(f"not a program node: {node!r}")

    def loop(self, node) -> Superoperator:
        yes, no = self.branch_maps(node)
        step = compose(yes, self.run(node.body))  # measure P, then the body
        trace = LoopTrace(0)
        self.loops.append(trace)
        W = Superoperator.zero(self.d)
        delta = np.inf
        for k in range(self.tol.max_fix_iters):
            W_next = compress(add(no, compose(step, W)), self.tol)
            spec = _choi_diff_spectrum(W_next, W)
            delta = float(np.max(np.abs(spec))) if spec.size else 0.0
            trace.deltas.append(delta)
            lam = float(spec.min()) if spec.size else 0.0
            trace.worst_monotone_margin = min(trace.worst_monotone_margin, lam)
            if lam < -self.tol.eps_psd * max(1.0, delta):
                raise InvalidProgramError(f"fixpoint iterate {k + 1} is not above iterate {k}")
            W = W_next
            if delta <= self.tol.eps_fix:
                trace.iterations = k
                return W
        raise NonConvergenceError(f"loop did not converge in {self.tol.max_fix_iters} iterations", delta)


def compile_with_trace(ast, register_size: int | None = None, tol: Tolerances = DEFAULT_TOL) -> CompileResult:
    """Compile and report fixpoint iteration counts of every loop."""
    if isinstance(ast, str):
        ast = parse(ast)
    n = register_size if register_size is not None else max(1, _max_qubit(ast) + 1)
    if not 1 <= n <= MAX_REGISTER:
        raise InvalidProgramError(f"register size must be between 1 and {MAX_REGISTER}")
    c = _Compiler(n, tol)
    return CompileResult(c.run(ast), c.loops)


def compile(ast, register_size: int | None = None, tol: Tolerances = DEFAULT_TOL) -> Superoperator:
    """Denotation of a program on ``register_size`` qubits."""
    return compile_with_trace(ast, register_size, tol).program
