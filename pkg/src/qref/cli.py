"""``qref`` command-line driver.

Exit codes: 0 the checked order holds (or the command succeeded), 1 the
order fails and a witness is printed, 2 invalid input.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from qref import serialize
from qref.detrefine import (
    RefinementVerdict,
    refines_effect,
    refines_proj,
    sp_proj,
    wlp_effect,
    wlp_proj,
    wp_effect,
    wp_proj,
)
from qref.errors import QrefError
from qref.linalg import DEFAULT_TOL, Subspace, Tolerances, as_subspace, hermitian_eig, loewner_leq
from qref.ndrefine import (
    NProgram,
    egli_milner_leq,
    hoare_leq,
    nd_refines_proj,
    nd_refines_set,
    smyth_leq,
    sp_proj_nd,
    wlp_proj_nd,
    wlp_set,
    wp_proj_nd,
    wp_set,
)
from qref.predicates import EffectSet, as_effect, powerdomain_leq
from qref.programs import check_cptn, choi

ORDERS = ("cp", "tot-e", "par-e", "tot-p", "par-p", "tot-s", "par-s", "smyth", "hoare", "em")

OK, FAILS, INVALID = 0, 1, 2


class UsageError(QrefError):
    """Inputs are well formed but do not fit the requested command."""


# -- loading ----------------------------------------------------------------------


def load_doc(path):
    return serialize.load(path)


def load_nprogram(path, tol: Tolerances) -> NProgram:
    doc = load_doc(path)
    if serialize.classify(doc) not in ("program", "nprogram"):
        raise UsageError(f"{path}: expected a program or nondeterministic program")
    return serialize.nprogram_from_json(doc).validate(tol)


def load_program(path, tol: Tolerances):
    Ep = load_nprogram(path, tol)
    if len(Ep) != 1:
        raise UsageError(f"{path}: expected a deterministic program (one generator)")
    return Ep.generators[0]


def load_predicate(path, tol: Tolerances):
    doc = load_doc(path)
    pred = serialize.predicate_from_json(doc)
    if isinstance(pred, EffectSet):
        pred.validate(tol)
    elif not isinstance(pred, Subspace):
        pred = as_effect(pred, tol)
    return pred


# -- output -----------------------------------------------------------------------


def emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(serialize.dumps(payload, indent=2))
    else:
        print(human)


def _tol(args) -> Tolerances:
    return Tolerances(
        eps_psd=args.tol_psd if args.tol_psd is not None else DEFAULT_TOL.eps_psd,
        eps_rank=DEFAULT_TOL.eps_rank,
        eps_fix=DEFAULT_TOL.eps_fix,
        eps_feas=args.tol_feas if args.tol_feas is not None else DEFAULT_TOL.eps_feas,
    )


def _describe_witness(w) -> str:
    if w is None:
        return ""
    if hasattr(w, "flavor"):
        return (f"\n  witness: {w.flavor} specification ({w.kind}) on dimension {w.dim}, "
                f"violated by {w.violation:.6g}")
    return f"\n  witness: {type(w).__name__}"


def _report_verdict(args, v: RefinementVerdict) -> int:
    status = "holds" if v.holds else "fails"
    human = f"{v.order}: {status} (margin {v.margin:.6g})"
    if not v.holds:
        human += _describe_witness(v.witness)
        cert = v.details.get("certificate")
        if cert is not None:
            human += f"\n  certificate state on Choi space, gap {cert.gap:.6g} against generator {cert.generator}"
    for k, val in v.details.items():
        if k not in ("certificate", "state"):
            human += f"\n  {k}: {val}"
    emit(args, v.to_json(), human)
    return OK if v.holds else FAILS


# -- check ------------------------------------------------------------------------


def _cp_verdict(E, F, tol) -> RefinementVerdict:
    JE, JF = choi(E), choi(F)
    holds, margin = loewner_leq(JE, JF, tol)
    v = RefinementVerdict(holds, "cp", margin)
    if not holds:
        w, V = hermitian_eig(JF - JE)
        v.details["state"] = np.outer(V[:, 0], V[:, 0].conj())
    return v


def _nd_effect_verdict(kind, Ep, Fp, tol, seed, n) -> RefinementVerdict:
    # no intrinsic decision: set refinement implies it, sampling refutes it
    from qref.oracles import refutation_search

    tag = "tot-e" if kind == "total" else "par-e"
    sv = nd_refines_set(kind, Ep, Fp, tol)
    if sv.holds:
        return RefinementVerdict(True, tag, sv.margin, details={"decided_by": "set refinement"})
    cex = refutation_search(tag, Ep, Fp, n, seed, tol)
    if cex is not None:
        M, N = cex.spec
        from qref.detrefine import Specification

        spec = Specification("effect", M, N, M.shape[0], kind, -cex.detail["margin"])
        return RefinementVerdict(False, tag, cex.detail["margin"], witness=spec,
                                 details={"space": cex.space, "draw": cex.detail["draw"]})
    return RefinementVerdict(True, tag, 0.0, details={
        "decided_by": f"sampling ({n} draws)",
        "note": "sound for refutation, sampled for affirmation",
    })


def _set_orders(order, left, right, tol, mode) -> RefinementVerdict:
    kind = {"smyth": "smyth", "hoare": "hoare", "em": "egli_milner"}[order]
    holds = powerdomain_leq(kind, left, right, mode, tol)
    return RefinementVerdict(holds, order, 0.0, details={"mode": mode})


def run_check(args) -> int:
    tol = _tol(args)
    order = args.order
    if order in ("smyth", "hoare", "em"):
        dl, dr = load_doc(args.left), load_doc(args.right)
        if serialize.classify(dl) == "effect_set" and serialize.classify(dr) == "effect_set":
            return _report_verdict(args, _set_orders(order, load_predicate(args.left, tol),
                                                     load_predicate(args.right, tol), tol, args.mode))
        Ep, Fp = load_nprogram(args.left, tol), load_nprogram(args.right, tol)
        fn = {"smyth": smyth_leq, "hoare": hoare_leq, "em": egli_milner_leq}[order]
        return _report_verdict(args, RefinementVerdict(fn(Ep, Fp, tol), order, 0.0))

    Ep, Fp = load_nprogram(args.left, tol), load_nprogram(args.right, tol)
    det = len(Ep) == 1 and len(Fp) == 1
    kind = "total" if order.startswith("tot") or order == "cp" else "partial"
    if order == "cp":
        if not det:
            raise UsageError("the cp order compares deterministic programs")
        v = _cp_verdict(Ep.generators[0], Fp.generators[0], tol)
    elif order.endswith("-e"):
        if det:
            v = refines_effect(kind, Ep.generators[0], Fp.generators[0], tol)
        else:
            v = _nd_effect_verdict(kind, Ep, Fp, tol, args.seed, args.samples)
    elif order.endswith("-p"):
        v = (refines_proj(kind, Ep.generators[0], Fp.generators[0], tol) if det
             else nd_refines_proj(kind, Ep, Fp, tol))
    else:
        v = nd_refines_set(kind, Ep, Fp, tol)
    return _report_verdict(args, v)


def run_witness(args) -> int:
    if args.order in ("cp", "smyth", "hoare", "em"):
        raise UsageError("witness specifications exist for the tot-*/par-* orders")
    args.json = True
    return run_check(args)


# -- transform --------------------------------------------------------------------


def run_transform(args) -> int:
    tol = _tol(args)
    which, flavor = args.which, args.flavor
    if which == "sp" and flavor != "proj":
        raise UsageError("strongest postconditions are defined for projector predicates only")
    Ep = load_nprogram(args.program, tol)
    pred = load_predicate(args.predicate, tol)
    if flavor == "effect":
        if isinstance(pred, (Subspace, EffectSet)):
            raise UsageError("effect transformers need an effect predicate")
        if len(Ep) != 1:
            raise UsageError("effect transformers need a deterministic program; use the set flavor")
        out = (wp_effect if which == "wp" else wlp_effect)(Ep.generators[0], pred)
    elif flavor == "proj":
        if isinstance(pred, EffectSet):
            raise UsageError("projector transformers need a projector or subspace")
        Q = as_subspace(pred, tol)
        out = {"wp": wp_proj_nd, "wlp": wlp_proj_nd, "sp": sp_proj_nd}[which](Ep, Q, tol)
        if len(Ep) == 1:
            out = {"wp": wp_proj, "wlp": wlp_proj, "sp": sp_proj}[which](Ep.generators[0], Q, tol)
    else:
        if not isinstance(pred, EffectSet):
            pred = EffectSet(pred.shape[0] if not isinstance(pred, Subspace) else pred.ambient_dim,
                             [pred.projector() if isinstance(pred, Subspace) else pred])
        out = (wp_set if which == "wp" else wlp_set)(Ep, pred)
    payload = serialize.predicate_to_json(out)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(serialize.dumps(payload, indent=2) + "\n")
    print(serialize.dumps(payload, indent=2 if args.json else None))
    return OK


# -- compile / validate -----------------------------------------------------------


def run_compile(args) -> int:
    from qref.qwhile import compile_with_trace, parse

    tol = _tol(args)
    with open(args.source, encoding="utf-8") as fh:
        ast = parse(fh.read())
    res = compile_with_trace(ast, args.register, tol)
    check_cptn(res.program, tol)
    payload = serialize.program_to_json(res.program)
    text = serialize.dumps(payload, indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.json:
        emit(args, {"program": payload, "loop_iterations": [t.iterations for t in res.loops]}, "")
    else:
        iters = ", ".join(str(t.iterations) for t in res.loops) or "none"
        dest = args.output or "stdout"
        print(f"compiled to {res.program.dim}-dimensional program "
              f"({len(res.program.kraus)} Kraus operators), loop iterations: {iters}, written to {dest}")
        if not args.output:
            print(text)
    return OK


def _validate_one(path, tol) -> tuple[str, bool, str]:
    try:
        doc = load_doc(path)
        kind = serialize.classify(doc)
        if kind in ("program", "nprogram"):
            Ep = load_nprogram(path, tol)
            from qref.programs import validate_cptn

            tp = all(validate_cptn(E, tol)[1] for E in Ep)
            return path, True, f"{kind} on dimension {Ep.dim}, {len(Ep)} generator(s), trace-preserving: {tp}"
        load_predicate(path, tol)
        return path, True, f"{kind} on dimension {doc['dim']}"
    except (QrefError, ValueError, OSError) as exc:
        return path, False, str(exc)


def run_validate(args) -> int:
    tol = _tol(args)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(lambda p: _validate_one(p, tol), args.paths))
    payload = [{"path": p, "valid": ok, "message": msg} for p, ok, msg in results]
    human = "\n".join(f"{p}: {'valid' if ok else 'INVALID'}: {msg}" for p, ok, msg in results)
    emit(args, payload if len(payload) > 1 else payload[0], human)
    return OK if all(ok for _, ok, _ in results) else INVALID


# -- oracle -----------------------------------------------------------------------


def run_oracle(args) -> int:
    from qref import oracles

    tol = _tol(args)
    what = args.what
    if what == "sample":
        rho = oracles.sample_density(args.dim, args.kind, args.seed)
        print(serialize.dumps(serialize.effect_to_json(rho), indent=2 if args.json else None))
        return OK
    if what == "random-program":
        E = oracles.random_program(args.dim, args.seed, args.rank, tp=args.tp)
        print(serialize.dumps(serialize.program_to_json(E), indent=2 if args.json else None))
        return OK
    if what == "grid":
        Ep, F = load_nprogram(args.left, tol), load_program(args.right, tol)
        ok = oracles.grid_feasible([choi(E) for E in Ep], choi(F), args.direction, args.step, tol)
        emit(args, {"feasible": ok, "step": args.step, "direction": args.direction},
             f"grid search (step {args.step}, {args.direction}): {'feasible' if ok else 'infeasible'}")
        return OK
    if what == "refute":
        Ep, Fp = load_nprogram(args.left, tol), load_nprogram(args.right, tol)
        cex = oracles.refutation_search(args.order, Ep, Fp, args.samples, args.seed, tol)
        payload = {"order": args.order, "draws": args.samples, "seed": args.seed,
                   "counterexample": serialize.to_jsonable(cex) if cex else None}
        human = (f"{args.order}: no refutation in {args.samples} draws" if cex is None
                 else f"{args.order}: refuted at draw {cex.detail['draw']} on the {cex.space} space")
        emit(args, payload, human)
        return OK if cex is None else FAILS
    raise UsageError(f"unknown oracle {what!r}")


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-psd", type=float, default=None, help="PSD tolerance (default 1e-9)")
    common.add_argument("--tol-feas", type=float, default=None, help="LMI feasibility tolerance (default 1e-7)")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for batch commands")

    p = argparse.ArgumentParser(prog="qref", description="Refinement checks for quantum programs.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="validate program or predicate files")
    v.add_argument("paths", nargs="+")
    v.set_defaults(func=run_validate)

    for name, fn in (("check", run_check), ("witness", run_witness)):
        c = sub.add_parser(name, parents=[common], help=f"{name} a refinement order")
        c.add_argument("order", choices=ORDERS)
        c.add_argument("left")
        c.add_argument("right")
        c.add_argument("--mode", choices=("hull", "finite"), default="hull",
                       help="reading of effect sets for smyth/hoare/em")
        c.add_argument("--samples", type=int, default=500, help="draws for sampled effect orders")
        c.set_defaults(func=fn)

    t = sub.add_parser("transform", parents=[common], help="apply a predicate transformer")
    t.add_argument("which", choices=("wp", "wlp", "sp"))
    t.add_argument("flavor", choices=("effect", "proj", "set"))
    t.add_argument("program")
    t.add_argument("predicate")
    t.add_argument("-o", "--output")
    t.set_defaults(func=run_transform)

    k = sub.add_parser("compile", parents=[common], help="compile a while-program to Kraus JSON")
    k.add_argument("source")
    k.add_argument("--register", type=int, default=None, help="number of qubits")
    k.add_argument("-o", "--output")
    k.set_defaults(func=run_compile)

    o = sub.add_parser("oracle", parents=[common], help="brute-force and sampling oracles")
    osub = o.add_subparsers(dest="what", required=True)
    s = osub.add_parser("sample", parents=[common], help="random density operator")
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--kind", choices=("pure", "mixed", "partial"), default="mixed")
    r = osub.add_parser("random-program", parents=[common], help="random CPTN program")
    r.add_argument("--dim", type=int, required=True)
    r.add_argument("--rank", type=int, default=None)
    r.add_argument("--tp", action="store_true", help="trace-preserving")
    g = osub.add_parser("grid", parents=[common], help="simplex grid search for a mixture below/above a program")
    g.add_argument("left")
    g.add_argument("right")
    g.add_argument("--direction", choices=("below", "above"), default="below")
    g.add_argument("--step", type=float, default=1e-2)
    f = osub.add_parser("refute", parents=[common], help="sampled refutation search")
    f.add_argument("order", choices=[o_ for o_ in ORDERS if "-" in o_] + ["cp"])
    f.add_argument("left")
    f.add_argument("right")
    f.add_argument("--samples", type=int, default=500)
    o.set_defaults(func=run_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (QrefError, ValueError, OSError) as exc:
        print(f"qref: error: {exc}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
