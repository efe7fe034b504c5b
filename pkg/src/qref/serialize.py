"""JSON interchange: complex numbers as ``[re, im]``, matrices row-major.

Floats are written with 17 significant digits so files round-trip bit for
bit.  Object layouts::

    program      {"dim": d, "kraus": [matrix, ...]}
    choi         {"dim": d, "choi": matrix, "choi_order": "out_ref"}
    nprogram     {"dim": d, "generators": [program, ...]}
    effect       {"dim": d, "matrix": matrix}
    subspace     {"dim": d, "basis": [vector, ...]}
    effect set   {"dim": d, "hull": true, "generators": [matrix, ...]}
    verdict      {"order": tag, "holds": bool, "margin": x, "witness": {...}}
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from qref.errors import DimensionError, QrefError
from qref.linalg import Subspace
from qref.predicates import EffectSet
from qref.programs import CHOI_ORDER, Superoperator, kraus_from_choi


class SchemaError(QrefError, ValueError):
    """A JSON document does not match any known layout."""


# -- encoding -----------------------------------------------------------------


def complex_to_json(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def vector_to_json(v) -> list:
    return [complex_to_json(z) for z in np.asarray(v).reshape(-1)]


def matrix_to_json(A) -> list:
    return [vector_to_json(row) for row in np.atleast_2d(np.asarray(A))]


def program_to_json(E: Superoperator) -> dict:
    return {"dim": E.dim, "kraus": [matrix_to_json(K) for K in E.kraus]}


def choi_to_json(E: Superoperator) -> dict:
    return {"dim": E.dim, "choi": matrix_to_json(E.choi()), "choi_order": CHOI_ORDER}


def nprogram_to_json(Ep) -> dict:
    return {"dim": Ep.dim, "generators": [program_to_json(E) for E in Ep]}


def effect_to_json(M) -> dict:
    M = np.asarray(M)
    return {"dim": M.shape[0], "matrix": matrix_to_json(M)}


def subspace_to_json(S: Subspace) -> dict:
    return {"dim": S.ambient_dim, "basis": [vector_to_json(S.basis[:, k]) for k in range(S.dim)]}


def effect_set_to_json(Theta: EffectSet) -> dict:
    return {"dim": Theta.dim, "hull": Theta.hull, "generators": [matrix_to_json(M) for M in Theta]}


def predicate_to_json(pred) -> dict:
    if isinstance(pred, Subspace):
        return subspace_to_json(pred)
    if isinstance(pred, EffectSet):
        return effect_set_to_json(pred)
    return effect_to_json(pred)


def spec_to_json(spec) -> dict:
    return {
        "flavor": spec.flavor,
        "kind": spec.kind,
        "dim": spec.dim,
        "pre": predicate_to_json(spec.pre),
        "post": predicate_to_json(spec.post),
        "violation": float(spec.violation),
    }


def _witness_to_json(w) -> Any:
    if w is None:
        return None
    if hasattr(w, "flavor"):
        return spec_to_json(w)
    return to_jsonable(w)


def certificate_to_json(cert) -> dict:
    return {
        "state": matrix_to_json(cert.state),
        "generator": int(cert.generator),
        "gap": float(cert.gap),
        "direction": cert.direction,
    }


def to_jsonable(obj) -> Any:
    """Best-effort conversion of engine results to JSON-ready values."""
    from qref.ndrefine import Certificate, NProgram

    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return complex_to_json(obj)
    if isinstance(obj, Certificate):
        return certificate_to_json(obj)
    if isinstance(obj, Superoperator):
        return program_to_json(obj)
    if isinstance(obj, NProgram):
        return nprogram_to_json(obj)
    if isinstance(obj, (Subspace, EffectSet)):
        return predicate_to_json(obj)
    if hasattr(obj, "flavor") and hasattr(obj, "pre"):
        return spec_to_json(obj)
    if isinstance(obj, np.ndarray):
        return matrix_to_json(obj) if obj.ndim == 2 else vector_to_json(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "__dict__"):
        return {k: to_jsonable(v) for k, v in vars(obj).items()}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def verdict_to_json(v) -> dict:
    out = {
        "order": v.order,
        "holds": bool(v.holds),
        "margin": float(v.margin),
        "witness": _witness_to_json(v.witness),
    }
    if v.details:
        out["details"] = to_jsonable(v.details)
    return out


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj, indent: int | None = None) -> str:
    """``json.dumps`` with every float printed to 17 significant digits."""

    def enc(o, level):
        pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
        end = "" if indent is None else "\n" + " " * (indent * level)
        sep = ", " if indent is None else ","
        if isinstance(o, bool) or o is None or isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return _fmt_float(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [pad + json.dumps(str(k)) + ": " + enc(v, level + 1) for k, v in o.items()]
            return "{" + sep.join(items) + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            # numeric leaves stay on one line
            if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(enc(v, level) for v in o) + "]"
            return "[" + sep.join(pad + enc(v, level + 1) for v in o) + end + "]"
        return enc(to_jsonable(o), level)

    return enc(obj, 0)


# -- decoding -----------------------------------------------------------------


def _complex(z) -> complex:
    if isinstance(z, (list, tuple)):
        if len(z) != 2:
            raise SchemaError("complex numbers are [re, im] pairs")
        return complex(float(z[0]), float(z[1]))
    if isinstance(z, (int, float)):
        return complex(z)
    raise SchemaError(f"not a number: {z!r}")


def matrix_from_json(rows, dim: int | None = None) -> np.ndarray:
    try:
        A = np.array([[_complex(z) for z in row] for row in rows], dtype=complex)
    except TypeError as exc:
        raise SchemaError("matrix must be a list of rows") from exc
    if A.ndim != 2 or (dim is not None and A.shape != (dim, dim)):
        raise DimensionError(f"matrix of shape {A.shape} where {dim}x{dim} was declared")
    return A


def vector_from_json(entries, dim: int) -> np.ndarray:
    v = np.array([_complex(z) for z in entries], dtype=complex)
    if v.shape != (dim,):
        raise DimensionError(f"vector of length {v.size} where {dim} was declared")
    return v


def _dim(doc: dict) -> int:
    d = doc.get("dim")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise SchemaError('"dim" must be a positive integer')
    return d


def program_from_json(doc: dict) -> Superoperator:
    d = _dim(doc)
    if "kraus" in doc:
        return Superoperator([matrix_from_json(K, d) for K in doc["kraus"]])
    if "choi" in doc:
        order = doc.get("choi_order", CHOI_ORDER)
        if order != CHOI_ORDER:
            raise SchemaError(f"unsupported choi_order {order!r}")
        return kraus_from_choi(matrix_from_json(doc["choi"], d * d))
    raise SchemaError('a program needs "kraus" or "choi"')


def nprogram_from_json(doc: dict):
    from qref.ndrefine import NProgram

    if "generators" in doc and doc["generators"] and isinstance(doc["generators"][0], dict):
        d = _dim(doc)
        Ep = NProgram([program_from_json(g) for g in doc["generators"]])
        if Ep.dim != d:
            raise DimensionError(f"generators act on {Ep.dim}, declared {d}")
        return Ep
    return NProgram([program_from_json(doc)])


def predicate_from_json(doc: dict):
    d = _dim(doc)
    if "matrix" in doc:
        return matrix_from_json(doc["matrix"], d)
    if "basis" in doc:
        vecs = [vector_from_json(v, d) for v in doc["basis"]]
        if not vecs:
            return Subspace.zero(d)
        return Subspace.span(np.stack(vecs, axis=1), d)
    if "generators" in doc:
        return EffectSet(d, [matrix_from_json(M, d) for M in doc["generators"]], bool(doc.get("hull", True)))
    raise SchemaError('a predicate needs "matrix", "basis" or "generators"')


def classify(doc: dict) -> str:
    """Name the layout of a decoded JSON document."""
    if not isinstance(doc, dict):
        raise SchemaError("top-level JSON value must be an object")
    if "kraus" in doc or "choi" in doc:
        return "program"
    if "generators" in doc:
        gens = doc["generators"]
        if gens and isinstance(gens[0], dict):
            return "nprogram"
        return "effect_set"
    if "matrix" in doc:
        return "effect"
    if "basis" in doc:
        return "subspace"
    raise SchemaError("unrecognized document layout")


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
