"""Command-line interface: ``permbp <command> [options]``.

Exit codes: 0 success (non-convergence is flagged, not fatal), 2 bad input,
3 request beyond what the exact routines can handle.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import cheb, oracle, thermo
from .bp import posterior_arrival_times, run_bp
from .graph import (
    ComparisonGraph,
    GraphFormatError,
    format_edge_list,
    gen_btl_comparisons,
    gen_grown_network,
    gen_random_directed,
    gen_random_partial_order,
    gen_step_comparisons,
    is_dag,
    load_graph,
    parse_edge_list,
    read_comparisons_csv,
)
from .kernels import Kernel
from .popdyn import population_dynamics
from .rankings import DECIMATION_BETA, greedy_decimation

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3
MARGINAL_POINTS = 101
GENERATORS = ("partial-order", "grown", "directed", "step", "btl")


class InputError(ValueError):
    pass


def _num(x):
    """JSON-safe float (inf and nan become null)."""
    x = float(x)
    return x if math.isfinite(x) else None


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "NA"
    return str(x)


def _read_input(path: str) -> ComparisonGraph:
    if path == "-":
        text = sys.stdin.read()
        return read_comparisons_csv(text) if text.lstrip().lower().startswith("winner") else parse_edge_list(text)
    try:
        return load_graph(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _bp_kwargs(args) -> dict:
    return dict(tol=args.tol, max_sweeps=args.max_sweeps, damping=args.damping, seed=args.seed)


def _require_dag(g: ComparisonGraph, what: str):
    if not is_dag(g):
        raise InputError(f"{what} needs an acyclic comparison graph; input has a directed cycle")


# ---------------------------------------------------------------------------
# commands: each returns (json_payload, tsv_lines)

def cmd_count(args):
    g = _read_input(args.input)
    _require_dag(g, "count")
    le = thermo.count_linear_extensions(g, d=args.degree, **_bp_kwargs(args))
    rep = le.report
    out = {
        "command": "count",
        "n": g.n,
        "edges": g.num_edges,
        "log_count": le.log_count,
        "count": le.count,
        "log_z": rep.log_z,
        "entropy_per_site": rep.log_z_per_site,
        "converged": rep.converged,
        "sweeps": rep.sweeps,
        "residual": float(le.result.residual),
    }
    rows = [f"{k}\t{_fmt(v)}" for k, v in out.items() if k != "command"]
    return out, rows


def _kernel_from(args) -> Kernel:
    if args.beta is None:
        return Kernel.zero_temp()
    return Kernel(args.family, args.beta)


def cmd_marginals(args):
    g = _read_input(args.input)
    kernel = _kernel_from(args)
    if kernel.family == "zero":
        _require_dag(g, "zero-temperature marginals")
        res = posterior_arrival_times(g, d=args.degree, **_bp_kwargs(args)).result
    else:
        res = run_bp(g, kernel, d=args.degree, schedule=thermo._default_schedule(g), **_bp_kwargs(args))
    xs = np.linspace(0.0, 1.0, MARGINAL_POINTS)
    dens = cheb.evaluate(res.node_marginals, xs)
    nodes = [
        {"node": g.label(i), "mean": float(res.means[i]), "density": dens[i].tolist()}
        for i in range(g.n)
    ]
    out = {
        "command": "marginals",
        "family": kernel.family,
        "beta": _num(kernel.beta),
        "converged": res.converged,
        "sweeps": res.sweeps_used,
        "grid": xs.tolist(),
        "nodes": nodes,
    }
    rows = ["node\tmean\t" + "\t".join(f"x={x:.2f}" for x in xs)]
    rows += [f"{nd['node']}\t{_fmt(nd['mean'])}\t" + "\t".join(map(_fmt, nd["density"])) for nd in nodes]
    if not res.converged:
        rows.append(f"# warning: BP did not converge in {res.sweeps_used} sweeps")
    return out, rows


def cmd_rank(args):
    g = _read_input(args.input)
    beta = DECIMATION_BETA if args.beta is None else args.beta
    r = greedy_decimation(g, beta, d=args.degree, tol=args.tol, seed=args.seed)
    out = {
        "command": "rank",
        "beta": beta,
        "order": [g.label(i) for i in r.order],
        "violations": r.violations,
        "removed_edges": [[g.label(i), g.label(j)] for i, j in r.removed_edges],
        "unconverged_rounds": r.unconverged_rounds,
        "flagged": r.flagged,
    }
    rows = [f"{pos}\t{lab}" for pos, lab in enumerate(out["order"], 1)]
    rows.append(f"# violations\t{r.violations}")
    rows += [f"# removed\t{a}\t{b}" for a, b in out["removed_edges"]]
    if r.flagged:
        rows.append(f"# warning: {r.unconverged_rounds} decimation round(s) ended unconverged")
    return out, rows


def _fit_one(job):
    g, family, lo, hi, d, kw = job
    return thermo.fit_beta(g, family, (lo, hi), d, **kw)


def cmd_fit(args):
    g = _read_input(args.input)
    lo, hi = args.beta_min, args.beta_max
    if not 0 <= lo < hi:
        raise InputError("need 0 <= --beta-min < --beta-max")
    kw = _bp_kwargs(args)
    jobs = [(g, fam, lo, hi, args.degree, kw) for fam in ("step", "btl")]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=min(args.workers, len(jobs))) as pool:
            fits = list(pool.map(_fit_one, jobs))
    else:
        fits = [_fit_one(j) for j in jobs]
    best = max(fits, key=lambda f: f.log_z).family
    out = {
        "command": "fit",
        "families": {
            f.family: {"beta": f.beta, "log_z": f.log_z, "flags": f.flags, "unconverged": f.unconverged}
            for f in fits
        },
        "preferred": best,
    }
    rows = ["family\tbeta\tlog_z\tflags"]
    rows += [f"{f.family}\t{_fmt(f.beta)}\t{_fmt(f.log_z)}\t{','.join(f.flags) or '-'}" for f in fits]
    rows.append(f"# preferred\t{best}")
    return out, rows


def cmd_generate(args):
    kind, n, lam, seed = args.kind, args.n, args.lam, args.seed
    truth = None
    if kind == "partial-order":
        g, gt = gen_random_partial_order(n, lam, seed)
        truth = {"positions": gt.permutation.tolist()}
    elif kind == "grown":
        g, gt = gen_grown_network(n, lam, seed)
        truth = {"positions": gt.permutation.tolist()}
    elif kind == "directed":
        g = gen_random_directed(n, lam, seed)
    elif kind == "step":
        g, gt = gen_step_comparisons(n, lam, _need_beta(args), seed)
        truth = {"positions": gt.permutation.tolist()}
    else:
        g, u = gen_btl_comparisons(n, lam, _need_beta(args), seed)
        truth = {"latent": u.tolist()}
    side = {
        "command": "generate",
        "kind": kind,
        "n": n,
        "lam": lam,
        "beta": args.beta,
        "seed": seed,
        "edges": g.num_edges,
        "ground_truth": truth,
    }
    text = format_edge_list(g)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(args.output + ".json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(side, indent=2, sort_keys=True) + "\n")
        return side, [f"# wrote {args.output} ({g.num_edges} edges) and {args.output}.json"]
    return side, text.splitlines()


def _need_beta(args) -> float:
    if args.beta is None:
        raise InputError("this generator needs --beta")
    return args.beta


def cmd_exact(args):
    g = _read_input(args.input)
    _require_dag(g, "exact enumeration")
    count = oracle.count_le_exact(g, max_states=1_000_000)
    out = {"command": "exact", "n": g.n, "count": str(count),
           "log_count": math.log(count) if count else None}
    rows = [f"count\t{count}"]
    if not args.count_only:
        R = oracle.rank_matrix_exact(g)
        out["ranks"] = [{"node": g.label(i), "probs": R[i].tolist()} for i in range(g.n)]
        rows.append("node\t" + "\t".join(f"rank{t + 1}" for t in range(g.n)))
        rows += [f"{g.label(i)}\t" + "\t".join(map(_fmt, R[i].tolist())) for i in range(g.n)]
    return out, rows


def cmd_popdyn(args):
    if not args.lam > 0:
        raise InputError("--lam must be > 0")
    r = population_dynamics(args.lam, d=args.degree, N=args.population, sweeps=args.sweeps,
                            samples=args.samples, seed=args.seed)
    out = {"command": "popdyn", "lam": args.lam, "d": args.degree, "population": args.population,
           "s_bethe": r.s_bethe, "stderr": r.stderr}
    rows = [f"s_bethe\t{_fmt(r.s_bethe)}", f"stderr\t{_fmt(r.stderr)}"]
    return out, rows


COMMANDS = {
    "count": cmd_count,
    "marginals": cmd_marginals,
    "rank": cmd_rank,
    "fit": cmd_fit,
    "generate": cmd_generate,
    "exact": cmd_exact,
    "popdyn": cmd_popdyn,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--degree", "-d", type=int, default=32, help="Chebyshev degree (default 32)")
    common.add_argument("--beta", type=float, default=None, help="inverse temperature")
    common.add_argument("--tol", type=float, default=1e-8)
    common.add_argument("--max-sweeps", type=int, default=1000)
    common.add_argument("--damping", type=float, default=0.0)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("tsv", "json"), default="tsv")
    common.add_argument("--workers", type=int, default=1, help="worker processes where supported")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="permbp", description="Belief propagation over permutations.")
    sub = p.add_subparsers(dest="command", required=True)

    for name, helptext in [("count", "ln(# linear extensions) of a DAG"),
                           ("rank", "ranking by greedy decimation"),
                           ("exact", "exact counts and rank distributions (small inputs)")]:
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("input", help="edge list or winner,loser CSV ('-' for stdin)")
        if name == "exact":
            s.add_argument("--count-only", action="store_true", help="skip rank distributions")

    s = sub.add_parser("marginals", parents=[common], help="per-node position densities")
    s.add_argument("input")
    s.add_argument("--family", choices=("step", "btl"), default="step",
                   help="kernel used when --beta is given (default step)")

    s = sub.add_parser("fit", parents=[common], help="fit beta per family and pick the better model")
    s.add_argument("input")
    s.add_argument("--beta-min", type=float, default=0.0)
    s.add_argument("--beta-max", type=float, default=10.0)

    s = sub.add_parser("generate", parents=[common], help="random instances with ground truth")
    s.add_argument("kind", choices=GENERATORS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--lam", type=float, required=True, help="mean degree (out-degree for grown)")
    s.add_argument("--output", "-o", default=None, help="edge-list path; sidecar goes to PATH.json")

    s = sub.add_parser("popdyn", parents=[common], help="population-dynamics s_Bethe(lambda)")
    s.add_argument("--lam", type=float, required=True)
    s.add_argument("--population", type=int, default=10_000)
    s.add_argument("--sweeps", type=int, default=50)
    s.add_argument("--samples", type=int, default=100_000)
    return p


def _validate(args):
    if args.degree < 2:
        raise InputError("--degree must be >= 2")
    if not args.tol > 0:
        raise InputError("--tol must be > 0")
    if args.max_sweeps < 1:
        raise InputError("--max-sweeps must be >= 1")
    if not 0 <= args.damping < 1:
        raise InputError("--damping must be in [0, 1)")
    if args.beta is not None and not args.beta >= 0:
        raise InputError("--beta must be >= 0")
    if args.workers < 1:
        raise InputError("--workers must be >= 1")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _validate(args)
        out, rows = COMMANDS[args.command](args)
    except oracle.OracleLimitError as exc:
        print(f"permbp {args.command}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, GraphFormatError, ValueError) as exc:
        print(f"permbp {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.format == "json":
        sys.stdout.write(json.dumps(out, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write("\n".join(rows) + ("\n" if rows else ""))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
