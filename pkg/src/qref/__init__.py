"""Refinement checks for quantum programs.

Deterministic programs are CPTN super-operators (:mod:`qref.programs`),
nondeterministic ones are convex hulls of finitely many of them
(:mod:`qref.ndrefine`).  Refinement decisions and predicate transformers
live in :mod:`qref.detrefine` and :mod:`qref.ndrefine`; :mod:`qref.qwhile`
compiles a small while-language to super-operators.
"""

from qref.detrefine import RefinementVerdict, refines_effect, refines_proj
from qref.linalg import DEFAULT_TOL, Subspace, Tolerances
from qref.ndrefine import NProgram, nd_refines_proj, nd_refines_set
from qref.predicates import EffectSet
from qref.programs import Superoperator, choi, cp_order

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOL",
    "EffectSet",
    "NProgram",
    "RefinementVerdict",
    "Subspace",
    "Superoperator",
    "Tolerances",
    "choi",
    "cp_order",
    "nd_refines_proj",
    "nd_refines_set",
    "refines_effect",
    "refines_proj",
]
