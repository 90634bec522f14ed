"""Command-line frontend.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 statistical-test
rejection in gated mode.  VRJP_THREADS caps worker parallelism (execution is
single-process by default; outputs never depend on the cap).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as exps
from . import io as vio
from .environment import MCMCParams, compute_psi_u, laplace_oracle, sample_nu, sample_rho_o
from .errors import ConfigError, GateFailure, GraphError, NumericalError
from .graph import build_graph, exhaustion, wire, wired_subset
from .interlacement import sample_window
from .mjp import DecoratedPath, build_chain, simulate_mjp
from .reduction import k_reduce, kplus_reduce, kplus_reduce_modified
from .reinforced import exchangeable_check, simulate_vrjp


def _load_json(path, what: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} file {p} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} is not valid JSON: {e}") from None


def _graph_from_args(args):
    return build_graph(_load_json(args.graph, "graph spec"))


def _wired_from_args(args, graph):
    if args.wired_n is None:
        raise ConfigError("--wired-n is required for this command")
    exh = exhaustion(graph, args.wired_n, getattr(args, "exhaustion", "ball"))
    return wire(graph, exh.level(args.wired_n))


def _mcmc_from_args(args) -> MCMCParams:
    return MCMCParams(burn_in=args.burn_in, thin=args.thin, chains=args.chains)


def _add_mcmc_args(sp):
    sp.add_argument("--burn-in", type=int, default=10_000, dest="burn_in")
    sp.add_argument("--thin", type=int, default=10)
    sp.add_argument("--chains", type=int, default=64)


def cmd_sample_beta(args) -> int:
    graph = _graph_from_args(args)
    params = _mcmc_from_args(args)
    records = []
    if args.mode == "nu" and args.wired_n is None:
        conduct = graph.conductance_matrix()
        rng = vio.rng_for(args.seed, "sample_nu")
        draws, diag = sample_nu(conduct, args.samples, rng=rng, params=params)
        for row in draws:
            records.append({"beta": row.tolist(), "vertices": list(range(graph.num_vertices))})
    else:
        wired = _wired_from_args(args, graph)
        if args.mode == "nu":
            rng = vio.rng_for(args.seed, "sample_nu")
            draws, diag = sample_nu(wired.conduct, args.samples, rng=rng, params=params)
            for row in draws:
                records.append(
                    {"beta": row.tolist(), "vertices": list(wired.vn) + ["delta"]}
                )
        else:
            from .environment import BetaField, verify_b_membership

            rng = vio.rng_for(args.seed, "sample_rho_o")
            samples, diag = sample_rho_o(wired, args.samples, rng=rng, params=params)
            exh = exhaustion(graph, args.wired_n, getattr(args, "exhaustion", "ball"))
            nested = [
                [wired.index[b] for b in exh.level(m)] for m in range(1, args.wired_n + 1)
            ]
            for s in samples:
                level = verify_b_membership(wired.conduct, np.append(s.beta, 0.0), nested)
                fld = BetaField(s.beta, tuple(wired.vn), includes_delta=False, verified_level=level)
                records.append(
                    {
                        "beta": fld.values.tolist(),
                        "vertices": list(fld.vertices),
                        "verified_level": fld.verified_level,
                        "u": s.ufield.u.tolist(),
                        "psi": s.ufield.psi.tolist(),
                        "beta_delta": s.ufield.beta_delta,
                        "gamma_o": s.coupling.gamma_o,
                    }
                )
    records.append(
        {
            "diagnostics": {
                "acceptance_rate": diag.acceptance_rate,
                "ess": diag.ess,
                "sweeps": diag.sweeps,
                "chains": diag.chains,
                "rejected": diag.rejected,
            }
        }
    )
    vio.write_jsonl(args.out, records)
    print(f"wrote {len(records) - 1} samples to {args.out}")
    return 0


def _env_from_record(wired, rec):
    beta = np.asarray(rec["beta"], dtype=float)
    if list(rec.get("vertices", [])) not in ([], list(wired.vn)):
        base = {v: i for i, v in enumerate(rec["vertices"])}
        try:
            beta = np.array([beta[base[v]] for v in wired.vn])
        except KeyError as e:
            raise ConfigError(f"beta record does not cover wired vertex {e}") from None
    uf = compute_psi_u(wired, beta[: len(wired.vn)])
    return beta[: len(wired.vn)], uf


def cmd_simulate_vrjp(args) -> int:
    graph = _graph_from_args(args)
    wired = _wired_from_args(args, graph)
    out = []
    for r in range(args.replicas):
        rng = vio.rng_for(args.seed, "vrjp", r)
        path, rec = simulate_vrjp(wired.conduct, wired.root, args.steps, rng)
        if not exchangeable_check(rec, path):
            raise NumericalError("exchangeable time-scale audit failed")
        out.append({"replica": r, "w": path.vertices.tolist(), "l": path.holdings.tolist()})
    vio.write_jsonl(args.out, out)
    print(f"wrote {len(out)} paths to {args.out}")
    return 0


def cmd_simulate_mjp(args) -> int:
    graph = _graph_from_args(args)
    wired = _wired_from_args(args, graph)
    recs = vio.read_jsonl(args.beta)
    recs = [r for r in recs if "beta" in r]
    if not recs:
        raise ConfigError("beta file contains no samples")
    beta, uf = _env_from_record(wired, recs[args.env_index])
    chain = build_chain(wired, beta, uf)
    out = []
    for r in range(args.replicas):
        rng = vio.rng_for(args.seed, "mjp", r)
        path = simulate_mjp(chain, wired.root, args.steps, rng)
        out.append({"replica": r, "w": path.vertices.tolist(), "l": path.holdings.tolist()})
    vio.write_jsonl(args.out, out)
    print(f"wrote {len(out)} paths to {args.out}")
    return 0


def cmd_rates(args) -> int:
    graph = _graph_from_args(args)
    n_list = [int(n) for n in args.n_list.split(",")]
    exh = exhaustion(graph, max(n_list), args.exhaustion)
    k_spec = _load_json(args.K, "K spec")
    K_base = vio.resolve_K(graph, k_spec)
    recs = [r for r in vio.read_jsonl(args.beta) if "beta" in r]
    if not recs:
        raise ConfigError("beta file contains no samples")
    rec = recs[args.env_index]
    rows = []
    for n in n_list:
        wired = wire(graph, exh.level(n))
        beta, uf = _env_from_record(wired, rec)
        chain = build_chain(wired, beta, uf)
        Kw = wired_subset(wired, K_base)
        table = exps.rate_table_finite(chain, Kw, level=n)
        for i, a in enumerate(table.labels):
            for j, b in enumerate(table.labels):
                if i != j:
                    rows.append(
                        {
                            "n": n,
                            "x": a,
                            "y": b,
                            "rate_kind": exps._kind(i, j, len(table.labels)),
                            "value": table.rates[i, j],
                            "bracket_lo": "",
                            "bracket_hi": "",
                        }
                    )
    vio.write_csv(args.out, "vrjp.rates.v1", ["n", "x", "y", "rate_kind", "value", "bracket_lo", "bracket_hi"], rows)
    print(f"wrote {len(rows)} rate rows to {args.out}")
    return 0


def _window_from_record(rec, K, delta):
    from .interlacement import InterlacementWindow

    initial = DecoratedPath(
        np.asarray(rec["initial_w"], dtype=int),
        np.asarray(rec["initial_l"], dtype=float),
        escaped_end=bool(rec.get("initial_escaped", True)),
    )
    points = []
    for pt, t in zip(rec["points"], rec["t_labels"]):
        traj = DecoratedPath(
            np.asarray(pt["w"], dtype=int),
            np.asarray(pt["l"], dtype=float),
            origin=int(pt["origin"]),
            escaped_end=bool(pt.get("escaped", True)),
        )
        points.append((traj, float(t)))
    return InterlacementWindow(
        initial, tuple(points), tuple(K), float(rec.get("T", 0.0)), delta, float(rec.get("mass", 0.0))
    )


def cmd_reduce(args) -> int:
    from .reduction import reduce_interlacement

    graph = _graph_from_args(args)
    wired = _wired_from_args(args, graph)
    k_spec = _load_json(args.K, "K spec")
    Kw = wired_subset(wired, vio.resolve_K(graph, k_spec))
    out = []
    for rec in vio.read_jsonl(args.paths):
        if args.flavor == "interlace":
            if "points" not in rec:
                continue
            red = reduce_interlacement(_window_from_record(rec, Kw, wired.delta), Kw)
        elif "w" in rec:
            path = DecoratedPath(np.asarray(rec["w"], dtype=int), np.asarray(rec["l"], dtype=float))
            if args.flavor == "kplus":
                red = kplus_reduce(path, Kw, wired.delta, tail_complete=args.tail_complete)
            elif args.flavor == "kplus_mod":
                u_delta = float(rec.get("u_delta", args.u_delta))
                red = kplus_reduce_modified(path, Kw, wired.delta, u_delta, tail_complete=args.tail_complete)
            else:
                red = k_reduce(path, Kw, certified_from=rec.get("certified_from"))
        else:
            continue
        out.append(
            {
                "replica": rec.get("replica", rec.get("window")),
                "w": red.vertices.tolist(),
                "l": red.holdings.tolist(),
                "flavor": red.flavor,
                "complete": red.complete,
            }
        )
    vio.write_jsonl(args.out, out)
    print(f"wrote {len(out)} reduced paths to {args.out}")
    return 0


def cmd_interlace(args) -> int:
    graph = _graph_from_args(args)
    exh = exhaustion(graph, args.trunc_N, args.exhaustion)
    wired = wire(graph, exh.level(args.trunc_N))
    k_spec = _load_json(args.K, "K spec")
    Kw = wired_subset(wired, vio.resolve_K(graph, k_spec))
    recs = [r for r in vio.read_jsonl(args.beta) if "beta" in r]
    if not recs:
        raise ConfigError("beta file contains no samples")
    beta, uf = _env_from_record(wired, recs[args.env_index])
    chain = build_chain(wired, beta, uf)
    out = []
    for w in range(args.windows):
        rng = vio.rng_for(args.seed, "interlace", w)
        win = sample_window(chain, Kw, args.T, wired.root, rng)
        out.append(
            {
                "window": w,
                "T": win.T,
                "mass": win.mass,
                "count": len(win.points),
                "t_labels": [t for _, t in win.points],
                "initial_w": win.initial.vertices.tolist(),
                "initial_l": win.initial.holdings.tolist(),
                "initial_escaped": win.initial.escaped_end,
                "points": [
                    {
                        "w": p.vertices.tolist(),
                        "l": p.holdings.tolist(),
                        "origin": p.origin,
                        "escaped": p.escaped_end,
                    }
                    for p, _ in win.points
                ],
                "degenerate": win.degenerate,
            }
        )
    vio.write_jsonl(args.out, out)
    print(f"wrote {len(out)} windows to {args.out}")
    return 0


def cmd_mixture_test(args) -> int:
    graph = _graph_from_args(args)
    wired = _wired_from_args(args, graph)
    rng = vio.rng_for(args.seed, "mixture")
    rep = exps.mixture_test(wired, args.J, args.replicas, rng, _mcmc_from_args(args))
    print(f"chi2 p={rep.p_chi2:.4g}  ks p={rep.p_ks:.4g}  control p={rep.p_chi2_control:.4g}")
    if args.gated and (rep.p_chi2 < 0.01 or rep.p_ks < 0.01):
        raise GateFailure("mixture test rejected at the 1% level")
    return 0


def cmd_converge(args) -> int:
    cfg = vio.load_config(args.config)
    out_dir = Path(args.out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng_rates = vio.rng_for(cfg.seed, "experiments")
    result = exps.rate_convergence_experiment(
        cfg.graph, cfg.exh, cfg.K_base, cfg.n_list, cfg.trunc_N, cfg.n_envs, rng_rates, cfg.mcmc
    )
    vio.write_csv(
        out_dir / "rates.csv",
        "vrjp.rates.v1",
        ["env_id", "n", "x", "y", "rate_kind", "r_n", "r_inf_lo", "r_inf_hi", "gap"],
        result.rows,
    )
    rng_mt = vio.rng_for(cfg.seed, "main_theorem")
    report = exps.main_theorem_test(
        cfg.graph, cfg.exh, cfg.K_base, cfg.J, cfg.n_list, max(cfg.n_list), cfg.replicas, rng_mt, cfg.mcmc
    )
    dist_rows = [
        {
            "n": n,
            "chi2_per_sample": d["chi2_per_sample"],
            "tv": d["tv"],
            "ks_sum": d["ks_sum"],
            "total": d["total"],
            "null_floor": report.null_floor,
        }
        for n, d in zip(report.n_list, report.distances)
    ]
    vio.write_csv(
        out_dir / "distances.csv",
        "vrjp.distances.v1",
        ["n", "chi2_per_sample", "tv", "ks_sum", "total", "null_floor"],
        dist_rows,
    )
    pv_rows = [
        {"test": "chi2_vertex_sequences", "n": max(cfg.n_list), "p_value": report.p_chi2_matched}
    ] + [
        {"test": f"ks_holding_{j}", "n": max(cfg.n_list), "p_value": p}
        for j, p in enumerate(report.p_ks_matched)
    ]
    vio.write_csv(out_dir / "pvalues.csv", "vrjp.pvalues.v1", ["test", "n", "p_value"], pv_rows)
    oracle_rows = _oracle_block(cfg)
    vio.write_csv(
        out_dir / "oracle.csv",
        "vrjp.oracle.v1",
        ["graph_id", "lambda_id", "mc_estimate", "mc_stderr", "exact_value"],
        oracle_rows,
    )
    manifest = {
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "n_list": cfg.n_list,
        "trunc_N": cfg.trunc_N,
        "replicas": cfg.replicas,
        "n_envs": cfg.n_envs,
        "max_bracket_gap": result.max_gap,
        "null_floor": report.null_floor,
        "outputs": ["rates.csv", "distances.csv", "pvalues.csv", "oracle.csv"],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(f"wrote results to {out_dir}")
    if args.gated and (
        report.p_chi2_matched < 0.01 or any(p < 0.01 for p in report.p_ks_matched)
    ):
        raise GateFailure("matched-volume two-sample tests rejected at the 1% level")
    return 0


def _oracle_block(cfg) -> list:
    """Small Laplace-oracle validation on a <=6-vertex subgraph of the config graph."""
    from .stats import batch_means_stderr

    dist = cfg.graph.bfs_distances(cfg.graph.root)
    order = sorted(range(cfg.graph.num_vertices), key=lambda v: (dist[v], v))
    sub = order[: min(5, cfg.graph.num_vertices)]
    conduct = cfg.graph.conductance_matrix(sub)
    rng = vio.rng_for(cfg.seed, "oracle")
    draws, _ = sample_nu(conduct, 20_000, rng=rng, params=MCMCParams(burn_in=200, thin=2, chains=50))
    rows = []
    lam_rng = vio.rng_for(cfg.seed, "oracle", 1)
    for lam_id in range(10):
        lam = lam_rng.uniform(0.0, 1.5, size=len(sub))
        exact = laplace_oracle(conduct, lam)
        vals = np.exp(-(draws @ lam))
        mean, se = batch_means_stderr(vals)
        rows.append(
            {
                "graph_id": "config_subgraph",
                "lambda_id": lam_id,
                "mc_estimate": mean,
                "mc_stderr": se,
                "exact_value": exact,
            }
        )
    return rows


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vrjp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, wired=True):
        sp.add_argument("--graph", required=True)
        if wired:
            sp.add_argument("--wired-n", type=int, default=None, dest="wired_n")
            sp.add_argument("--exhaustion", default="ball", choices=["ball", "slow"])
        sp.add_argument("--seed", type=int, required=True)

    sp = sub.add_parser("sample-beta", help="sample the environment field")
    common(sp)
    sp.add_argument("--mode", choices=["nu", "rho_o"], default="nu")
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--out", required=True)
    _add_mcmc_args(sp)
    sp.set_defaults(func=cmd_sample_beta)

    sp = sub.add_parser("simulate-vrjp", help="simulate the reinforced walk")
    common(sp)
    sp.add_argument("--steps", type=int, default=10)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate_vrjp)

    sp = sub.add_parser("simulate-mjp", help="simulate the quenched jump process")
    common(sp)
    sp.add_argument("--beta", required=True)
    sp.add_argument("--env-index", type=int, default=0, dest="env_index")
    sp.add_argument("--steps", type=int, default=10)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate_mjp)

    sp = sub.add_parser("rates", help="analytic reduction rate tables")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--exhaustion", default="ball", choices=["ball", "slow"])
    sp.add_argument("--beta", required=True)
    sp.add_argument("--env-index", type=int, default=0, dest="env_index")
    sp.add_argument("--K", required=True)
    sp.add_argument("--n-list", required=True, dest="n_list")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("reduce", help="reduce recorded paths")
    common(sp)
    sp.add_argument("--paths", required=True)
    sp.add_argument("--K", required=True)
    sp.add_argument("--flavor", choices=["kplus", "kplus_mod", "k", "interlace"], default="kplus")
    sp.add_argument("--u-delta", type=float, default=0.0, dest="u_delta")
    sp.add_argument("--tail-complete", action="store_true", dest="tail_complete")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("interlace", help="sample interlacement windows")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--exhaustion", default="ball", choices=["ball", "slow"])
    sp.add_argument("--beta", required=True)
    sp.add_argument("--env-index", type=int, default=0, dest="env_index")
    sp.add_argument("--K", required=True)
    sp.add_argument("--T", type=float, default=10.0)
    sp.add_argument("--trunc-N", type=int, required=True, dest="trunc_N")
    sp.add_argument("--windows", type=int, default=10)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_interlace)

    sp = sub.add_parser("mixture-test", help="reinforced walk vs quenched mixture")
    common(sp)
    sp.add_argument("--J", type=int, default=3)
    sp.add_argument("--replicas", type=int, default=10_000)
    sp.add_argument("--gated", action="store_true")
    _add_mcmc_args(sp)
    sp.set_defaults(func=cmd_mixture_test)

    sp = sub.add_parser("converge", help="run the convergence experiments")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--gated", action="store_true")
    sp.set_defaults(func=cmd_converge)

    return ap


def main(argv=None) -> int:
    os.environ.setdefault("VRJP_THREADS", "1")
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GraphError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except GateFailure as e:
        print(f"gate rejected: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
