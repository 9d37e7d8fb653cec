"""Command line interface: ``isoflow <command> --file problem.json``.

Exit codes: 0 success, 1 verification failure or monitor breach, 2 input
error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import flow, kacmoody as km, phase, spectral, verify
from .problem import Problem, ProblemError, encode_number, load

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_ABORT = 0, 1, 2, 3


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _fmt(x) -> str:
    if isinstance(x, complex):
        if x.imag == 0:
            return f"{x.real:.12g}"
        return f"{x.real:.12g}{x.imag:+.12g}j"
    return str(x)


def _vec(v) -> str:
    return "(" + ", ".join(_fmt(x) for x in v) + ")"


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _problem(args) -> Problem:
    if not args.file:
        raise CommandError("--file is required for this command")
    return load(args.file)


def _node(pb: Problem, spec) -> int:
    g = pb.graph.graph
    try:
        return g.index(int(spec)) if str(spec).lstrip("-").isdigit() else g.index(spec)
    except (km.GraphError, IndexError, ValueError):
        raise CommandError(f"unknown node {spec!r}") from None


# --- root-system commands ------------------------------------------------------------------


def cmd_roots(args, out) -> int:
    pb = _problem(args)
    pb.require("graph", "d")
    g = pb.graph.graph
    if not any(pb.d):
        raise CommandError("$.d: the zero vector is not classified")
    rc = km.classify_root(g, pb.d)
    label = {"real": "real root", "imaginary": "imaginary root"}.get(rc.kind, "not a root")
    if rc.is_root:
        label = f"{'positive' if rc.sign > 0 else 'negative'} {label}"
    dd = km.cartan_form(g, pb.d, pb.d)
    delta = km.delta_dim(g, pb.d)
    print(f"d = {_vec(pb.d)}", file=out)
    print(f"{label}, (d,d) = {dd}, Delta = {delta}", file=out)
    if args.output:
        _write_json(args.output, {"kind": rc.kind, "sign": rc.sign, "is_root": rc.is_root, "dd": dd, "delta": delta})
    return EXIT_OK


def cmd_dim(args, out) -> int:
    pb = _problem(args)
    pb.require("graph", "d")
    g = pb.graph.graph
    dd = km.cartan_form(g, pb.d, pb.d)
    print(f"(d,d) = {dd}, Delta(d) = 2 - (d,d) = {2 - dd}", file=out)
    if args.output:
        _write_json(args.output, {"dd": dd, "delta": 2 - dd})
    return EXIT_OK


def _orbit_rows(g, elems):
    rows = []
    for e in elems:
        rows.append(
            {
                "word": [g.nodes[k] for k in e.word],
                "d": list(e.d),
                "lambda": [encode_number(x) for x in e.lam],
                "dd": km.cartan_form(g, e.d, e.d),
                "lambda.d": encode_number(km.pairing(e.lam, e.d)),
            }
        )
    return rows


def _print_orbit(rows, out) -> None:
    print(f"{'word':<32} {'d':<24} {'(d,d)':>6} {'lambda.d':>10}  lambda", file=out)
    for r in rows:
        word = " ".join(f"s[{w}]" for w in r["word"]) or "id"
        print(f"{word:<32} {_vec(r['d']):<24} {r['dd']:>6} {_fmt(r['lambda.d']):>10}  {r['lambda']}", file=out)


def cmd_reflect(args, out) -> int:
    pb = _problem(args)
    pb.require("graph", "d", "lam")
    g = pb.graph.graph
    node = args.node if args.node is not None else pb.options.get("node")
    if node is None:
        raise CommandError("--node is required")
    i = _node(pb, node)
    if km.param_is_zero(pb.lam[i]):
        raise CommandError(f"reflection at {g.nodes[i]} is inadmissible: lambda_i = 0")
    elem = km.OrbitElement(km.reflect_param(g, i, pb.lam), km.reflect_root(g, i, pb.d), (i,))
    rows = _orbit_rows(g, [km.OrbitElement(tuple(pb.lam), tuple(pb.d), ()), elem])
    _print_orbit(rows, out)
    if args.output:
        _write_json(args.output, rows)
    return EXIT_OK


def cmd_orbit(args, out) -> int:
    pb = _problem(args)
    pb.require("graph", "d", "lam")
    g = pb.graph.graph
    depth = args.depth if args.depth is not None else int(pb.options.get("depth", 1))
    elems = km.weyl_orbit(g, pb.lam, pb.d, depth)
    rows = _orbit_rows(g, elems)
    _print_orbit(rows, out)
    zero = [g.nodes[k] for k in range(g.size) if km.param_is_zero(pb.lam[k])]
    if zero:
        print(f"inadmissible at the start (lambda_i = 0): {', '.join(zero)}", file=out)
    if args.output:
        _write_json(args.output, rows)
    return EXIT_OK


def cmd_exists(args, out) -> int:
    pb = _problem(args)
    pb.require("graph", "d", "lam")
    v = km.ds_exists(pb.graph, pb.lam, pb.d)
    print(f"verdict: {v.status}", file=out)
    print(f"reason: {v.reason}", file=out)
    if v.decomposition:
        print("decomposition: " + " + ".join(_vec(b) for b in v.decomposition), file=out)
    if v.delta is not None:
        print(f"Delta(d) = {v.delta}" + (f", sum of Delta over parts = {v.delta_sum}" if v.delta_sum is not None else ""), file=out)
    if args.output:
        _write_json(
            args.output,
            {"status": v.status, "reason": v.reason, "decomposition": [list(b) for b in v.decomposition], "delta": v.delta, "delta_sum": v.delta_sum},
        )
    return EXIT_ABORT if v.status == "budget-exceeded" else EXIT_OK


def cmd_readings(args, out) -> int:
    pb = _problem(args)
    pb.require("graph", "d")
    rs = km.lax_readings(pb.graph, pb.d)
    print(f"{'infinity':<10} {'rank':>5} {'finite poles':>13} {'order at inf':>13}", file=out)
    for r in rs:
        where = "none" if r.infinity_part is None else f"part {r.infinity_part}"
        print(f"{where:<10} {r.rank:>5} {r.finite_poles:>13} {r.infinity_order:>13}", file=out)
    if args.output:
        _write_json(args.output, [{"infinity_part": r.infinity_part, "rank": r.rank, "finite_poles": r.finite_poles, "infinity_order": r.infinity_order} for r in rs])
    return EXIT_OK


# --- phase-space commands ------------------------------------------------------------------------


def cmd_spectral(args, out) -> int:
    pb = _problem(args)
    st = pb.state()
    p = spectral.state_spectral_poly(st)
    c = p.coeffs
    print("nonzero coefficients c[i,j] of lambda^i z^j:", file=out)
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    for (i, j), x in np.ndenumerate(c):
        if abs(x) > 1e-12 * scale:
            print(f"  c[{i},{j}] = {_fmt(complex(x))}", file=out)
    if args.output:
        _write_json(args.output, [[encode_number(complex(x)) for x in row] for row in c])
    return EXIT_OK


def _state_record(st: phase.FlowState, s: float) -> dict:
    sp = st.space
    res = phase.residues(st)
    traces = {}
    for i, r in res.items():
        m = np.eye(len(r.R), dtype=complex)
        vals = []
        for _ in range(sp.node_dims[i]):
            m = m @ r.R
            vals.append(encode_number(complex(np.trace(m))))
        traces[str(i)] = vals
    return {
        "s": s,
        "times": [encode_number(complex(t)) for t in st.times],
        "blocks": {
            f"{i},{j}": [[encode_number(complex(x)) for x in row] for row in st.block(i, j)]
            for i in range(sp.nparts)
            for j in range(sp.nparts)
            if i != j
        },
        "Lambda": {str(i): [[encode_number(complex(x)) for x in row] for row in r.Lam] for i, r in res.items()},
        "trace_powers": traces,
        "log_tau": encode_number(complex(st.log_tau)),
    }


def _outputs(base: str | None, default: str):
    base = Path(base or default)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".csv")


def cmd_integrate(args, out) -> int:
    pb = _problem(args)
    st = pb.state()
    path = pb.path if pb.path is not None else []
    step = args.step or float(pb.options.get("step", 1e-3))
    traj = flow.integrate(st, path, step=step)
    js, cs = _outputs(args.output, "trajectory")
    _write_json(js, [_state_record(s, p) for s, p in zip(traj.states, traj.params)])
    with open(cs, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "lam_drift", "trace_drift", "log_tau_re", "log_tau_im"])
        for m in traj.monitors:
            w.writerow([f"{m['s']:.12g}", f"{m['lam_drift']:.6e}", f"{m['trace_drift']:.6e}", f"{m['log_tau'].real:.15g}", f"{m['log_tau'].imag:.15g}"])
    fin = traj.final
    print(f"steps recorded: {len(traj.states) - 1}, path length {traj.params[-1]:.6g}", file=out)
    print(f"log tau = {_fmt(complex(fin.log_tau))}", file=out)
    print(f"max Lambda drift = {max(m['lam_drift'] for m in traj.monitors):.3e}", file=out)
    print(f"max Tr R^k drift = {max(m['trace_drift'] for m in traj.monitors):.3e}", file=out)
    print(f"wrote {js} and {cs}", file=out)
    for msg in traj.warnings:
        print(f"warning: {msg}", file=out)
    if traj.aborted:
        print(f"aborted: {traj.reason}", file=out)
        return EXIT_ABORT
    return EXIT_FAIL if traj.warnings else EXIT_OK


def cmd_tau(args, out) -> int:
    pb = _problem(args)
    st = pb.state()
    if not pb.path:
        raise CommandError("$.path: tau needs a path")
    path = [np.asarray(p) for p in pb.path]
    if np.linalg.norm(path[-1] - st.times) > 1e-12 * max(1.0, np.linalg.norm(st.times)):
        path.append(st.times.copy())  # close the loop
    step = args.step or float(pb.options.get("step", 1e-2))
    coarse = flow.integrate(st, path, step=step)
    fine = flow.integrate(st, path, step=step / 2)
    if coarse.aborted or fine.aborted:
        print(f"aborted: {(coarse if coarse.aborted else fine).reason}", file=out)
        return EXIT_ABORT
    a, b = complex(coarse.final.log_tau), complex(fine.final.log_tau)
    rich = b + (b - a) / 15
    order = float(np.log2(abs(a) / abs(b))) if abs(a) > 0 and abs(b) > 0 else float("nan")
    print(f"Delta log tau (step {step:g}) = {_fmt(a)}", file=out)
    print(f"Delta log tau (step {step / 2:g}) = {_fmt(b)}", file=out)
    print(f"Richardson estimate = {_fmt(rich)}; observed order {order:.3g}", file=out)
    if args.output:
        _write_json(args.output, {"step": step, "coarse": encode_number(a), "fine": encode_number(b), "richardson": encode_number(rich), "order": order})
    return EXIT_OK


def cmd_verify(args, out) -> int:
    suite = args.suite or "all"
    trials = args.trials if args.trials is not None else 5
    seed = args.seed if args.seed is not None else 0
    if trials == 0:
        print("warning: trials = 0, every check passes vacuously", file=sys.stderr)
    try:
        results = verify.run_suite(suite, seed, trials)
    except KeyError as exc:
        raise CommandError(str(exc.args[0])) from None
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status} [{r.suite}] {r.name}  (tol {r.tolerance}, worst err/tol {r.worst:.3g}, trials {r.trials})", file=out)
    print(f"{len(results) - failed}/{len(results)} checks passed (seed {seed})", file=out)
    if args.output:
        _write_json(args.output, [r.__dict__ for r in results])
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "roots": cmd_roots,
    "reflect": cmd_reflect,
    "orbit": cmd_orbit,
    "exists": cmd_exists,
    "dim": cmd_dim,
    "readings": cmd_readings,
    "spectral": cmd_spectral,
    "integrate": cmd_integrate,
    "tau": cmd_tau,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isoflow", description="Isomonodromy systems on simply-laced supernova graphs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("suite_arg", nargs="?", help="suite for verify (algebraic, flow, sl2, spectral, orbits, all)")
    p.add_argument("--file", help="problem file (JSON)")
    p.add_argument("--node", help="node for reflect (id or index)")
    p.add_argument("--depth", type=int, help="orbit depth")
    p.add_argument("--step", type=float, help="integration step")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--trials", type=int, help="trials per check")
    p.add_argument("--suite", help="suite for verify")
    p.add_argument("--output", help="JSON output (integrate: base name for .json and .csv)")
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_intermixed_args(argv)
    args.suite = args.suite or args.suite_arg
    try:
        return COMMANDS[args.command](args, out)
    except ProblemError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (km.GraphError, phase.PhaseError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (flow.FlowError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
