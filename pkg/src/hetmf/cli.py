"""Command line front end: transient / steady-state analyses and the two
benchmark harnesses, emitting long-format CSV plus a JSON sidecar with the
full configuration.

Model sources (one per run):
  --model FILE                      JSON model file
  --cache n,alpha,m1,m2,...         list-based cache, Zipf(alpha) rates, scale 1
  --lb n,lambda,b,MIX               two-choice load balancer

MIX is one of  paper[:seed] | homog[:mu] | uniform[:lo:hi:seed].

Exit codes: 0 success, 2 partial (some requested methods failed), 1 usage or
fatal error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, cache, loadbalance, meanfield, oracle, refined, simulator
from .errors import HetmfError
from .model import ModelSpec, encode, load_model


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt(val) -> str:
    if val is None:
        return ""
    return f"{float(val):.12g}"


class _Clamp:
    """Clamp probabilities into [0,1] and count how often it was needed."""

    def __init__(self):
        self.events = 0

    def __call__(self, val):
        if val is None:
            return None
        v = float(val)
        if v < 0.0 or v > 1.0:
            self.events += 1
            return min(1.0, max(0.0, v))
        return v


def _parse_grid(spec: str) -> np.ndarray:
    try:
        t0, t1, steps = spec.split(":")
        t0, t1, steps = float(t0), float(t1), int(steps)
    except ValueError:
        raise _UsageError(f"bad grid {spec!r}, expected t0:t1:steps") from None
    if t0 != 0.0:
        raise _UsageError("grid must start at t0 = 0")
    if steps < 1 or t1 <= t0:
        raise _UsageError("grid needs t1 > 0 and steps >= 1")
    return np.linspace(t0, t1, steps + 1)


def _parse_methods(spec: str, allowed: tuple[str, ...]) -> list[str]:
    methods = [m.strip() for m in spec.split(",") if m.strip()]
    if not methods:
        raise _UsageError("at least one method is required")
    for m in methods:
        if m not in allowed:
            raise _UsageError(f"unknown method {m!r}; choose from {','.join(allowed)}")
    return methods


def _parse_mix(spec: str, n: int) -> tuple[float, ...]:
    parts = spec.split(":")
    kind = parts[0]
    if kind == "paper":
        seed = int(parts[1]) if len(parts) > 1 else 0
        return loadbalance.paper_mix_rates(n, seed)
    if kind == "homog":
        mu = float(parts[1]) if len(parts) > 1 else 1.2
        return (mu,) * n
    if kind == "uniform":
        lo = float(parts[1]) if len(parts) > 1 else 1.0
        hi = float(parts[2]) if len(parts) > 2 else 1.4
        seed = int(parts[3]) if len(parts) > 3 else 0
        rng = np.random.default_rng(seed)
        return tuple(rng.uniform(lo, hi, n))
    raise _UsageError(f"unknown mix spec {spec!r}")


def _resolve_model(args) -> tuple[ModelSpec, dict]:
    sources = [s for s in ("model", "cache", "lb") if getattr(args, s, None)]
    if len(sources) != 1:
        raise _UsageError("exactly one of --model/--cache/--lb is required")
    meta: dict = {"kind": sources[0]}
    if args.model:
        model = load_model(args.model)
        meta["path"] = args.model
        init = args.init.split(",") if args.init else [model.states[0]] * model.n
    elif args.cache:
        try:
            fields = args.cache.split(",")
            n, alpha = int(fields[0]), float(fields[1])
            sizes = [int(m) for m in fields[2:]]
        except (ValueError, IndexError):
            raise _UsageError(f"bad --cache {args.cache!r}, expected n,alpha,m1,...") from None
        if not sizes:
            raise _UsageError("--cache needs at least one list size")
        cfg = cache.cache_config(cache.zipf_popularities(n, alpha), sizes)
        model = cache.build_random_m(cfg)
        meta["cache_config"] = cfg
        init = args.init.split(",") if args.init else cache.default_assignment(cfg)
    else:
        try:
            n_s, lam_s, b_s, mix = args.lb.split(",", 3)
            n, lam, b = int(n_s), float(lam_s), int(b_s)
        except ValueError:
            raise _UsageError(f"bad --lb {args.lb!r}, expected n,lambda,b,mix") from None
        cfg = loadbalance.lb_config(_parse_mix(mix, n), lam, b)
        model = loadbalance.build_two_choice(cfg)
        meta["lb_config"] = cfg
        init = args.init.split(",") if args.init else ["0"] * n
    if len(init) != model.n:
        raise _UsageError(f"--init must list {model.n} states")
    meta["init"] = [str(s) for s in init]
    return model, meta


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_sidecar(path, args, status: dict, extra: dict) -> None:
    doc = {
        "tool": "hetmf",
        "version": __version__,
        "command": args.command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "command"},
        "method_status": status,
    }
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, default=repr, sort_keys=True)
        fh.write("\n")


def _status_exit(status: dict) -> int:
    return 0 if all(v == "ok" for v in status.values()) else 2


# ---------------------------------------------------------------------------
# transient


def _cmd_transient(args) -> int:
    model, meta = _resolve_model(args)
    methods = _parse_methods(args.methods, ("mf", "refined", "sim", "oracle"))
    grid = _parse_grid(args.grid)
    init = meta["init"]
    x0 = encode(model, init)
    n, S = model.n, model.num_states
    columns: dict[str, np.ndarray | None] = {k: None for k in
                                             ("mf", "refined", "sim", "sim_ci", "oracle")}
    status: dict[str, str] = {}
    for method in methods:
        try:
            if method == "mf":
                traj = meanfield.integrate(model, x0, grid=grid,
                                           rtol=args.rtol, atol=args.atol)
                columns["mf"] = traj.states.reshape(-1, n, S)
            elif method == "refined":
                rt = refined.integrate_refined(model, x0, grid=grid,
                                               rtol=args.rtol, atol=args.atol)
                columns["refined"] = rt.refined.reshape(-1, n, S)
            elif method == "sim":
                est = simulator.transient_mean(model, init, grid, args.replicas, args.seed)
                columns["sim"] = est.mean
                columns["sim_ci"] = est.ci_halfwidth
            elif method == "oracle":
                chain = oracle.build_full_chain(model, cap=args.oracle_cap)
                columns["oracle"] = oracle.transient_marginals(chain, init, grid)
            status[method] = "ok"
        except (HetmfError, ValueError) as exc:
            status[method] = f"error: {exc}"
            print(f"transient: method {method} failed: {exc}", file=sys.stderr)
    clamp = _Clamp()
    rows = []
    for ti, t in enumerate(grid):
        for k in range(n):
            for s, lbl in enumerate(model.states):
                def cell(name, clamp01=True):
                    col = columns[name]
                    if col is None:
                        return None
                    v = col[ti, k, s]
                    return clamp(v) if clamp01 else float(v)
                rows.append([_fmt(t), str(k + 1), lbl, _fmt(cell("mf")),
                             _fmt(cell("refined")), _fmt(cell("sim")),
                             _fmt(cell("sim_ci", clamp01=False)), _fmt(cell("oracle"))])
    _write_csv(f"{args.out}.csv",
               ["t", "object", "state", "mf", "refined", "sim_mean",
                "sim_ci_halfwidth", "oracle"], rows)
    _write_sidecar(f"{args.out}.json", args, status,
                   {"clamp_events": clamp.events, "init": init})
    return _status_exit(status)


# ---------------------------------------------------------------------------
# steady


def _steady_estimates(model, meta, methods, args, status):
    """Compute per-(k,s) steady estimates per method; None where unavailable."""
    n, S = model.n, model.num_states
    init = meta["init"]
    x0 = encode(model, init)
    out: dict[str, np.ndarray | None] = {k: None for k in
                                         ("mf", "refined", "sim", "sim_ci", "exact", "oracle")}
    x_star = None
    for method in methods:
        try:
            if method in ("mf", "refined") and x_star is None:
                x_star = meanfield.fixed_point(model, x0)
            if method == "mf":
                out["mf"] = x_star.reshape(n, S)
            elif method == "refined":
                rs = refined.refined_steady_state(model, x_star)
                out["refined"] = (x_star + rs.v).reshape(n, S)
            elif method == "sim":
                est = simulator.steady_state_mean(model, init, args.warmup, args.events,
                                                  args.seed)
                out["sim"] = est.mean
                out["sim_ci"] = est.ci_halfwidth
            elif method == "exact":
                if "cache_config" not in meta:
                    raise HetmfError("exact recurrence only exists for --cache models")
                out["exact"] = cache.exact_steady_state(meta["cache_config"])
            elif method == "oracle":
                chain = oracle.build_full_chain(model, cap=args.oracle_cap)
                out["oracle"] = oracle.stationary_marginals(chain, init)
            status[method] = "ok"
        except (HetmfError, ValueError) as exc:
            status[method] = f"error: {exc}"
            print(f"steady: method {method} failed: {exc}", file=sys.stderr)
    return out


def _cmd_steady(args) -> int:
    model, meta = _resolve_model(args)
    methods = _parse_methods(args.methods, ("mf", "refined", "sim", "exact", "oracle"))
    status: dict[str, str] = {}
    est = _steady_estimates(model, meta, methods, args, status)
    n, S = model.n, model.num_states
    clamp = _Clamp()
    rows = []
    for k in range(n):
        for s, lbl in enumerate(model.states):
            def cell(name, clamp01=True):
                col = est[name]
                if col is None:
                    return None
                return clamp(col[k, s]) if clamp01 else float(col[k, s])
            rows.append([str(k + 1), lbl, _fmt(cell("mf")), _fmt(cell("refined")),
                         _fmt(cell("sim")), _fmt(cell("sim_ci", clamp01=False)),
                         _fmt(cell("exact")), _fmt(cell("oracle"))])
    errors = {}
    if est["exact"] is not None:
        for name in ("mf", "refined", "sim", "oracle"):
            if est[name] is not None:
                errors[name] = cache.cache_error(est[name], est["exact"])
        rows.append(["summary", "error_vs_exact", _fmt(errors.get("mf")),
                     _fmt(errors.get("refined")), _fmt(errors.get("sim")), "",
                     _fmt(0.0), _fmt(errors.get("oracle"))])
    _write_csv(f"{args.out}.csv",
               ["object", "state", "mf", "refined", "sim_mean", "sim_ci_halfwidth",
                "exact", "oracle"], rows)
    _write_sidecar(f"{args.out}.json", args, status,
                   {"clamp_events": clamp.events, "errors_vs_exact": errors,
                    "init": meta["init"]})
    return _status_exit(status)


# ---------------------------------------------------------------------------
# bench-cache


def _cmd_bench_cache(args) -> int:
    try:
        n_list = [int(x) for x in args.n_list.split(",")]
    except ValueError:
        raise _UsageError(f"bad --n-list {args.n_list!r}") from None
    methods = _parse_methods(args.methods, ("mf", "refined", "sim"))
    status: dict[str, str] = {}
    rows = []
    results = []
    for n in n_list:
        m = int(np.floor(args.occupancy * n))
        if m < 1 or args.num_lists * m > n:
            status[f"n={n}"] = "error: occupancy yields an infeasible cache"
            continue
        cfg = cache.cache_config(cache.zipf_popularities(n, args.alpha),
                                 [m] * args.num_lists)
        model = cache.build_random_m(cfg)
        init = cache.default_assignment(cfg)
        exact = cache.exact_steady_state(cfg)
        per_n = {"n": n, "m": m}
        for method in methods:
            key = f"n={n}:{method}"
            try:
                if method == "mf":
                    x_star = meanfield.fixed_point(model, encode(model, init))
                    estimate = x_star.reshape(model.n, model.num_states)
                elif method == "refined":
                    x_star = meanfield.fixed_point(model, encode(model, init))
                    rs = refined.refined_steady_state(model, x_star)
                    estimate = (x_star + rs.v).reshape(model.n, model.num_states)
                else:
                    est = simulator.steady_state_mean(model, init, args.sim_warmup,
                                                      args.sim_events, args.seed)
                    estimate = est.mean
                err = cache.cache_error(estimate, exact)
                per_n[method] = err
                rows.append([str(n), method, _fmt(err), _fmt(n * err), _fmt(n * n * err)])
                status[key] = "ok"
            except (HetmfError, ValueError) as exc:
                status[key] = f"error: {exc}"
                print(f"bench-cache: {key} failed: {exc}", file=sys.stderr)
        results.append(per_n)
    _write_csv(f"{args.out}.csv", ["n", "method", "error", "n_x_error", "n2_x_error"], rows)
    _write_sidecar(f"{args.out}.json", args, status, {"rows": results})
    return _status_exit(status)


# ---------------------------------------------------------------------------
# bench-lb


def _cmd_bench_lb(args) -> int:
    try:
        n_list = [int(x) for x in args.n_list.split(",")]
    except ValueError:
        raise _UsageError(f"bad --n-list {args.n_list!r}") from None
    status: dict[str, str] = {}
    err_rows, tail_rows = [], []
    results = []
    for n in n_list:
        cfg = loadbalance.lb_config(_parse_mix(args.mix, n), args.lam, args.buffer)
        variants = {"mf": cfg, "refined": cfg}
        if args.homogeneous:
            hom = loadbalance.homogeneous_baseline(cfg)
            variants["mf_hom"] = hom
            variants["refined_hom"] = hom
        model = loadbalance.build_two_choice(cfg)
        init = ["0"] * n
        try:
            sim = simulator.steady_state_mean(model, init, args.warmup, args.events,
                                              args.seed)
            status[f"n={n}:sim"] = "ok"
        except (HetmfError, ValueError) as exc:
            status[f"n={n}:sim"] = f"error: {exc}"
            print(f"bench-lb: simulation failed for n={n}: {exc}", file=sys.stderr)
            continue
        tails_sim = loadbalance.tail_distribution(model, sim.mean.ravel())
        for s, val in enumerate(tails_sim):
            tail_rows.append([str(n), str(s), "sim", _fmt(val)])
        per_n = {"n": n}
        for name, vcfg in variants.items():
            key = f"n={n}:{name}"
            try:
                vmodel = loadbalance.build_two_choice(vcfg)
                x_star = meanfield.fixed_point(vmodel, encode(vmodel, init))
                if name.startswith("refined"):
                    rs = refined.refined_steady_state(vmodel, x_star)
                    estimate = x_star + rs.v
                else:
                    estimate = x_star
                err = float(np.abs(estimate.reshape(n, -1) - sim.mean).sum() / n)
                per_n[name] = err
                err_rows.append([str(n), name, _fmt(err)])
                for s, val in enumerate(loadbalance.tail_distribution(vmodel, estimate)):
                    tail_rows.append([str(n), str(s), name, _fmt(val)])
                status[key] = "ok"
            except (HetmfError, ValueError) as exc:
                status[key] = f"error: {exc}"
                print(f"bench-lb: {key} failed: {exc}", file=sys.stderr)
        results.append(per_n)
    _write_csv(f"{args.out}_error.csv", ["n", "method", "error"], err_rows)
    _write_csv(f"{args.out}_tails.csv", ["n", "s", "method", "value"], tail_rows)
    _write_sidecar(f"{args.out}.json", args, status, {"rows": results})
    return _status_exit(status)


# ---------------------------------------------------------------------------


def _add_model_source(p: _Parser) -> None:
    p.add_argument("--model", help="JSON model file")
    p.add_argument("--cache", help="cache model: n,alpha,m1,m2,...")
    p.add_argument("--lb", help="two-choice model: n,lambda,b,mix")
    p.add_argument("--init", help="comma-separated initial state labels")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--oracle-cap", type=int, default=oracle.DEFAULT_STATE_CAP)
    p.add_argument("--rtol", type=float, default=meanfield.DEFAULT_RTOL)
    p.add_argument("--atol", type=float, default=meanfield.DEFAULT_ATOL)
    p.add_argument("--out", required=True, help="output prefix")


def build_parser() -> _Parser:
    parser = _Parser(prog="hetmf", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transient", help="trajectories of the selected methods")
    _add_model_source(p)
    p.add_argument("--methods", default="mf,refined,sim")
    p.add_argument("--grid", default="0:10:100", help="t0:t1:steps (t0 must be 0)")
    p.add_argument("--replicas", type=int, default=1000)
    p.set_defaults(func=_cmd_transient)

    p = sub.add_parser("steady", help="steady-state estimates of the selected methods")
    _add_model_source(p)
    p.add_argument("--methods", default="mf,refined,sim")
    p.add_argument("--events", type=int, default=1_000_000)
    p.add_argument("--warmup", type=int, default=100_000)
    p.set_defaults(func=_cmd_steady)

    p = sub.add_parser("bench-cache", help="error-vs-exact table over system sizes")
    p.add_argument("--n-list", default="10,20,30,40,50")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--occupancy", type=float, default=0.3,
                   help="each list holds floor(occupancy*n) objects")
    p.add_argument("--num-lists", type=int, default=2)
    p.add_argument("--methods", default="mf,refined")
    p.add_argument("--sim-events", type=int, default=1_000_000)
    p.add_argument("--sim-warmup", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench_cache)

    p = sub.add_parser("bench-lb", help="heterogeneous vs homogeneous error and tails")
    p.add_argument("--n-list", default="10,20,30,40")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--buffer", type=int, default=loadbalance.DEFAULT_BUFFER)
    p.add_argument("--mix", default="paper:0")
    p.add_argument("--homogeneous", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--events", type=int, default=2_000_000)
    p.add_argument("--warmup", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench_lb)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except HetmfError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
