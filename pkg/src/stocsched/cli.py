"""Command-line interface: ``stocsched <command> ...``.

Commands mirror the experimental pipeline: ``gen`` -> ``solve-lp`` ->
``estimate-f`` -> ``simulate`` and the all-in-one ``bench``; ``mdp`` runs the
exact oracle and ``ingest`` turns a call log into an empirical profile.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from ._rng import RNG_NAME
from .attenuation import AttenuationTable, default_budget, estimate_f
from .core import Instance, dumps_instance, load_instance
from .engine import simulate_many
from .errors import StateSpaceLimitExceeded, StocSchedError
from .instances import (
    EXAMPLES,
    EmpiricalProfile,
    gen_example,
    gen_hard_alg,
    gen_integrality_gap,
    gen_synthetic,
    ingest_call_center,
    sample_real_instance,
)
from .lp import LpSolution, build_lp, solve_lp, write_lp_file
from .oracle import solve_mdp
from .policies import DISPLAY_NAMES, POLICY_NAMES, PolicySpec

log = logging.getLogger("stocsched")

SIM_CAP = 1000
TABLE_POLICIES = ("simalg", "conset", "safe", "greedy", "ur")
MODES = ("base", "deadline", "knapsack", "cardinality")


class UsageError(Exception):
    """Flag combination that argparse cannot reject on its own."""


# --- argument parsing ----------------------------------------------------------

def _source_args(p: argparse.ArgumentParser, multi_n: bool = False) -> None:
    g = p.add_argument_group("instance source")
    g.add_argument("--instance", metavar="PATH", help="instance JSON file")
    g.add_argument("--gen", nargs="+", metavar="KIND",
                   help="generator: syn | hard | gap | example NAME | real PROFILE")
    g.add_argument("--n", type=int, nargs="+" if multi_n else None, help="number of jobs")
    g.add_argument("--m", type=int, default=4, help="number of types for the gap family")
    g.add_argument("--eps-example", "--eps", dest="eps_example", type=float, default=0.1,
                   help="epsilon of the worked examples")
    g.add_argument("--K", dest="K", type=int, default=10, help="K of the greedy_ratio and deadline examples")
    g.add_argument("--horizon", type=int, help="override the horizon")
    g.add_argument("--capacity", type=float, help="knapsack capacity (unit weights when the instance has none)")
    g.add_argument("--k", type=int, help="cardinality limit")


def _seed_arg(p):
    p.add_argument("--seed", type=int, help="random seed (fallback: $STOCSCHED_SEED, then 0)")


def _mode_args(p):
    p.add_argument("--mode", choices=MODES, default="base")
    p.add_argument("--knapsack-accounting", choices=("strict", "analysis"), default="strict",
                   help="strict: overflowing jobs are not offered; analysis: overflow zeroes the run")


def _alg_args(p):
    p.add_argument("--epsilon", type=float, default=0.1,
                   help="SimAlg sampling parameter (0 = exact probabilities)")
    p.add_argument("--sims", type=int, help="simulations per attenuation row (default: capped budget)")
    p.add_argument("--atten-const", type=float, default=2.0, help="attenuation constant c in x/(c p f)")
    p.add_argument("--f-estimator", choices=("joint", "conditional"), default="conditional")
    p.add_argument("--f-table", metavar="PATH", help="precomputed attenuation table JSON")


def _policy_list(text: str) -> list[str]:
    names = [s.strip().lower() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in POLICY_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"policies must be a comma list of {','.join(POLICY_NAMES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stocsched", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stocsched {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance")
    _source_args(p)
    _seed_arg(p)
    p.add_argument("--out", metavar="PATH", help="write JSON here instead of stdout")

    p = sub.add_parser("solve-lp", help="solve the LP relaxation")
    _source_args(p)
    _seed_arg(p)
    _mode_args(p)
    p.add_argument("--out", metavar="PATH", help="write the solution JSON")
    p.add_argument("--lp-file", metavar="PATH", help="export the model in LP text format")

    p = sub.add_parser("estimate-f", help="Monte-Carlo attenuation table")
    _source_args(p)
    _seed_arg(p)
    _mode_args(p)
    _alg_args(p)
    p.add_argument("--lp", metavar="PATH", help="LP solution JSON (solved when omitted)")
    p.add_argument("--out", metavar="PATH", help="write the table JSON")

    p = sub.add_parser("simulate", help="simulate policies")
    _source_args(p)
    _seed_arg(p)
    _mode_args(p)
    _alg_args(p)
    p.add_argument("--policy", type=_policy_list, default=list(TABLE_POLICIES))
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--lp", metavar="PATH", help="LP solution JSON (solved when omitted)")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("mdp", help="exact optimal value on a small instance")
    _source_args(p)
    _seed_arg(p)
    _mode_args(p)
    p.add_argument("--example", choices=EXAMPLES, help="shortcut for --gen example NAME")
    p.add_argument("--dump-policy", metavar="PATH", help="write the optimal action table as JSON")

    p = sub.add_parser("ingest", help="build an empirical profile from a call log CSV")
    p.add_argument("csv", metavar="CSV")
    p.add_argument("--bin-seconds", type=float, default=20.0)
    p.add_argument("--out", metavar="PATH", help="write the profile JSON")

    p = sub.add_parser("bench", help="full pipeline over a family of instances")
    _source_args(p, multi_n=True)
    _seed_arg(p)
    _mode_args(p)
    _alg_args(p)
    p.add_argument("--policy", type=_policy_list, default=list(TABLE_POLICIES))
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--out", metavar="DIR", default="bench-out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--dump-policy", metavar="DIR", help="dump MDP action tables where computed")
    return parser


# --- shared helpers --------------------------------------------------------------

def resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("STOCSCHED_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"STOCSCHED_SEED must be an integer, got {env!r}") from None
    return 0


def _single_n(args, default=None):
    n = args.n
    if isinstance(n, list):
        if len(n) != 1:
            raise UsageError("this command takes a single --n")
        n = n[0]
    if n is None:
        n = default
    return n


def _load_profile(path: str) -> EmpiricalProfile:
    if path.lower().endswith(".csv"):
        return ingest_call_center(path)
    return EmpiricalProfile.load(path)


def make_instance_from_args(args, n: int | None, seed: int) -> Instance:
    if args.instance and args.gen:
        raise UsageError("use either --instance or --gen")
    if args.instance:
        inst = load_instance(args.instance)
    elif args.gen:
        kind, rest = args.gen[0], args.gen[1:]
        takes_arg = kind in ("example", "real")
        if len(rest) != int(takes_arg):
            raise UsageError(f"--gen {kind} takes {'one argument' if takes_arg else 'no argument'}")
        if kind in ("syn", "hard", "gap", "real") and n is None:
            raise UsageError(f"--gen {kind} needs --n")
        if kind == "syn":
            inst = gen_synthetic(n, seed)
        elif kind == "hard":
            inst = gen_hard_alg(n)
        elif kind == "gap":
            inst = gen_integrality_gap(n, args.m)
        elif kind == "example":
            kwargs = {"eps": args.eps_example, "K": args.K}
            if n is not None:
                kwargs["n"] = n
            elif rest[0] == "knapsack3":
                kwargs["n"] = 4
            if args.capacity is not None and rest[0].startswith("knapsack"):
                kwargs["W"] = args.capacity
            inst = gen_example(rest[0], **kwargs)
        elif kind == "real":
            inst = sample_real_instance(_load_profile(rest[0]), n, seed)
        else:
            raise UsageError(f"unknown generator {kind!r}")
    else:
        raise UsageError("an instance source is required (--instance or --gen)")
    return apply_overrides(inst, args)


def apply_overrides(inst: Instance, args) -> Instance:
    changes = {}
    if getattr(args, "horizon", None):
        inst = inst.with_horizon(args.horizon)
    if getattr(args, "capacity", None) is not None:
        changes["capacity"] = args.capacity
        if inst.weights is None:
            changes["weights"] = (1.0,) * inst.n
    if getattr(args, "k", None) is not None:
        changes["cardinality"] = args.k
    return replace(inst, **changes) if changes else inst


def engine_mode(args) -> str:
    if args.mode == "knapsack" and args.knapsack_accounting == "analysis":
        return "knapsack-analysis"
    return args.mode


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def _header(seed: int) -> str:
    return f"# stocsched {__version__} seed={seed} rng={RNG_NAME}\n"


def _write_table(path: Path, header: list[str], rows: list[list], seed: int, fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        data = {"generator": f"stocsched {__version__}", "seed": seed, "rng": RNG_NAME,
                "rows": [dict(zip(header, r)) for r in rows]}
        path.write_text(json.dumps(data, indent=1, default=_json_default), encoding="utf-8")
        return path
    buf = io.StringIO()
    buf.write(_header(seed))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(c) if not isinstance(c, str) else c for c in r])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and math.isnan(o):
        return None
    raise TypeError(type(o))


def lp_mode(mode: str) -> str:
    return "knapsack" if mode == "knapsack-analysis" else mode


def sims_for(instance: Instance, epsilon: float, sims: int | None) -> int:
    """Explicit ``--sims`` wins; otherwise the theoretical budget capped at ``SIM_CAP``."""
    if sims is not None:
        if sims < 1:
            raise UsageError("--sims must be >= 1")
        return sims
    if epsilon <= 0:
        return SIM_CAP
    M = default_budget(instance.n, instance.max_service, float(instance.values.max()), epsilon)
    if M > SIM_CAP:
        print(f"warning: attenuation budget {M} capped at {SIM_CAP} simulations per step "
              "(use --sims to override)", file=sys.stderr)
        return SIM_CAP
    return M


def _check_epsilon(eps: float) -> None:
    if not 0 <= eps < 1:
        raise UsageError("--epsilon must lie in [0, 1)")


def prepare_policies(instance, mode, names, args, seed, lp_sol=None, timings=None):
    """LP solve, attenuation estimate and policy specs for ``names``."""
    timings = {} if timings is None else timings
    _check_epsilon(args.epsilon)
    if lp_sol is None:
        t0 = time.perf_counter()
        lp_sol = solve_lp(build_lp(instance, lp_mode(mode)))
        timings["lp_ms"] = 1000 * (time.perf_counter() - t0)
    table = None
    if "simalg" in names:
        if args.f_table:
            table = AttenuationTable.load(args.f_table)
        else:
            t0 = time.perf_counter()
            M = sims_for(instance, args.epsilon, args.sims)
            table = estimate_f(instance, lp_sol, args.epsilon, M, seed, args.f_estimator, args.atten_const)
            timings["f_ms"] = 1000 * (time.perf_counter() - t0)
    specs = {}
    for name in names:
        specs[name] = PolicySpec(
            name,
            lp=lp_sol if name in ("safe", "conset", "simalg") else None,
            table=table if name == "simalg" else None,
            epsilon=args.epsilon if name == "simalg" else 0.0,
            atten_const=args.atten_const,
        )
    return lp_sol, table, specs


# --- commands ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    seed = resolve_seed(args)
    inst = make_instance_from_args(args, _single_n(args), seed)
    text = dumps_instance(inst)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out} ({inst.n} jobs, horizon {inst.horizon})")
    else:
        print(text)
    return 0


def cmd_solve_lp(args) -> int:
    seed = resolve_seed(args)
    inst = make_instance_from_args(args, _single_n(args), seed)
    model = build_lp(inst, lp_mode(engine_mode(args)))
    sol = solve_lp(model)
    if args.lp_file:
        write_lp_file(model, args.lp_file)
    if args.out:
        sol.save(args.out)
    if sol.status.value != "Optimal":
        print(f"error: LP status {sol.status.value}", file=sys.stderr)
        return 1
    print(round(sol.objective, 9))
    return 0


def cmd_estimate_f(args) -> int:
    seed = resolve_seed(args)
    _check_epsilon(args.epsilon)
    inst = make_instance_from_args(args, _single_n(args), seed)
    sol = LpSolution.load(args.lp) if args.lp else solve_lp(build_lp(inst, lp_mode(engine_mode(args))))
    M = sims_for(inst, args.epsilon, args.sims)
    table = estimate_f(inst, sol, args.epsilon, M, seed, args.f_estimator, args.atten_const)
    if args.out:
        table.save(args.out)
    print(f"M={M} epsilon={args.epsilon} min_f={table.f.min():.6g} fallback_cells={int(table.fallback.sum())}")
    return 0


def _results_rows(label, mode, seed, lp_obj, stats_by_policy):
    rows = []
    for name, st in stats_by_policy.items():
        ratio = st.mean / lp_obj if lp_obj and lp_obj > 0 else float("nan")
        rows.append([label, DISPLAY_NAMES[name], mode, st.reps, seed, st.mean, st.std, st.ci95, lp_obj, ratio])
    return rows


RESULTS_HEADER = ["instance", "policy", "mode", "reps", "seed", "mean", "std", "ci95", "lp_objective", "ratio_to_lp"]
PROFILE_HEADER = ["instance", "policy", "t", "free_frequency"]


def _profile_rows(label, stats_by_policy):
    rows = []
    for name, st in stats_by_policy.items():
        for t, fr in enumerate(st.free_frequency, start=1):
            rows.append([label, DISPLAY_NAMES[name], t, fr])
    return rows


def cmd_simulate(args) -> int:
    seed = resolve_seed(args)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    inst = make_instance_from_args(args, _single_n(args), seed)
    mode = engine_mode(args)
    pre = LpSolution.load(args.lp) if args.lp else None
    lp_sol, _, specs = prepare_policies(inst, mode, args.policy, args, seed, pre)
    stats = {name: simulate_many(inst, spec, mode, args.reps, seed) for name, spec in specs.items()}
    print(f"{'policy':<8} {'mean':>12} {'ci95':>10} {'ratio':>8}")
    for name, st in stats.items():
        ratio = st.mean / lp_sol.objective if lp_sol.objective > 0 else float("nan")
        print(f"{DISPLAY_NAMES[name]:<8} {st.mean:>12.6f} {st.ci95:>10.6f} {ratio:>8.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_table(out / "results.csv", RESULTS_HEADER,
                     _results_rows(inst.name, mode, seed, lp_sol.objective, stats), seed, args.format)
        _write_table(out / "profile.csv", PROFILE_HEADER, _profile_rows(inst.name, stats), seed, args.format)
    return 0


def cmd_mdp(args) -> int:
    seed = resolve_seed(args)
    if args.example:
        if args.gen or args.instance:
            raise UsageError("--example replaces --gen/--instance")
        args.gen = ["example", args.example]
    inst = make_instance_from_args(args, _single_n(args), seed)
    sol = solve_mdp(inst, engine_mode(args), record_actions=bool(args.dump_policy))
    if args.dump_policy:
        sol.dump(args.dump_policy)
    print(round(sol.value, 9))
    return 0


def cmd_ingest(args) -> int:
    prof = ingest_call_center(args.csv, args.bin_seconds)
    if args.out:
        prof.save(args.out)
    for name, c in prof.categories.items():
        print(f"{name:<9} freq={c.frequency:.4f} value={c.value:g} "
              f"service_mean={c.service.mean():.3f} bins, survival_len={len(c.survival)}")
    return 0


def _family_label(args, inst: Instance, n) -> str:
    if args.instance:
        return inst.name
    kind = args.gen[0]
    if kind == "syn":
        return f"Syn-{n}"
    if kind == "real":
        return f"Real-{n}"
    if kind == "hard":
        return f"Hard-{n}"
    if kind == "gap":
        return f"Gap-{n}-{args.m}"
    return inst.name if n is None else f"{inst.name}-{n}"


def render_svg(labels, series: dict[str, list[float]], title: str) -> str:
    """Line plot of ratio-to-LP per policy (one polyline each)."""
    W, H, L, R, T, B = 640, 400, 60, 130, 40, 50
    pw, ph = W - L - R, H - T - B
    vals = [v for s in series.values() for v in s if v is not None and not math.isnan(v)]
    lo = min([0.0] + vals)
    hi = max([1.0] + vals)
    k = max(len(labels) - 1, 1)

    def xy(i, v):
        return L + pw * i / k, T + ph * (1 - (v - lo) / (hi - lo))

    colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
           f'<text x="{W / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>']
    for q in range(6):
        v = lo + (hi - lo) * q / 5
        _, y = xy(0, v)
        out.append(f'<text x="{L - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.2f}</text>')
        out.append(f'<line x1="{L}" y1="{y:.1f}" x2="{L + pw}" y2="{y:.1f}" stroke="#ddd"/>')
    for i, lab in enumerate(labels):
        x, _ = xy(i, lo)
        out.append(f'<text x="{x:.1f}" y="{T + ph + 16}" text-anchor="middle">{lab}</text>')
    out.append(f'<text x="{L + pw / 2:.0f}" y="{H - 10}" text-anchor="middle">instance</text>')
    out.append(f'<text x="15" y="{T + ph / 2:.0f}" transform="rotate(-90 15 {T + ph / 2:.0f})" '
               'text-anchor="middle">ratio to LP</text>')
    for c, (name, s) in enumerate(series.items()):
        pts = " ".join(f"{xy(i, v)[0]:.1f},{xy(i, v)[1]:.1f}" for i, v in enumerate(s) if not math.isnan(v))
        col = colors[c % len(colors)]
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="2" points="{pts}"/>')
        out.append(f'<text x="{L + pw + 10}" y="{T + 14 * (c + 1)}" fill="{col}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_bench(args) -> int:
    seed = resolve_seed(args)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    mode = engine_mode(args)
    ns = args.n if args.n else [None]
    order = [p for p in TABLE_POLICIES if p in args.policy]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dump_policy:
        Path(args.dump_policy).mkdir(parents=True, exist_ok=True)

    values, cis, ratios, results, profiles, meta_rows = [], [], [], [], [], []
    labels, series = [], {DISPLAY_NAMES[p]: [] for p in order}
    for n in ns:
        inst = make_instance_from_args(args, n, seed)
        label = _family_label(args, inst, n)
        timings: dict = {}
        lp_sol, table, specs = prepare_policies(inst, mode, order, args, seed, None, timings)
        lp_obj = lp_sol.objective
        stats = {}
        for name in order:
            t0 = time.perf_counter()
            stats[name] = simulate_many(inst, specs[name], mode, args.reps, seed)
            timings[f"{name}_ms"] = 1000 * (time.perf_counter() - t0)
        try:
            t0 = time.perf_counter()
            mdp = solve_mdp(inst, mode, record_actions=bool(args.dump_policy))
            mdp_value = mdp.value
            timings["mdp_ms"] = 1000 * (time.perf_counter() - t0)
            if args.dump_policy:
                mdp.dump(Path(args.dump_policy) / f"{label}.json")
        except StateSpaceLimitExceeded:
            mdp_value = None
        values.append([label, lp_obj, mdp_value] + [stats[p].mean for p in order])
        cis.append([label] + [stats[p].ci95 for p in order])
        rrow = [stats[p].mean / lp_obj if lp_obj > 0 else float("nan") for p in order]
        ratios.append([label] + rrow)
        results += _results_rows(label, mode, seed, lp_obj, stats)
        profiles += _profile_rows(label, stats)
        labels.append(label)
        for p, r in zip(order, rrow):
            series[DISPLAY_NAMES[p]].append(r)
        meta_rows.append({"instance": label, "n": inst.n, "horizon": inst.horizon,
                          "attenuation_sims": None if table is None else table.M,
                          "runtime_ms": {k: round(v, 3) for k, v in timings.items()}})
        print(f"{label}: LP={lp_obj:.4f} " + " ".join(f"{DISPLAY_NAMES[p]}={stats[p].mean:.4f}" for p in order),
              file=sys.stderr)

    names = [DISPLAY_NAMES[p] for p in order]
    written = [
        _write_table(out / "values.csv", ["instance", "LP", "MDP"] + names, values, seed, args.format),
        _write_table(out / "ci95.csv", ["instance"] + names, cis, seed, args.format),
        _write_table(out / "ratios.csv", ["instance"] + names, ratios, seed, args.format),
        _write_table(out / "results.csv", RESULTS_HEADER, results, seed, args.format),
        _write_table(out / "profile.csv", PROFILE_HEADER, profiles, seed, args.format),
    ]
    (out / "plot.svg").write_text(
        render_svg(labels, series, f"Ratio to LP (stocsched {__version__}, seed {seed})"), encoding="utf-8")
    meta = {
        "generator": f"stocsched {__version__}",
        "seed": seed,
        "rng": RNG_NAME,
        "kernel_backend": kernels.BACKEND,
        "command": sys.argv[1:],
        "mode": mode,
        "reps": args.reps,
        "epsilon": args.epsilon,
        "atten_const": args.atten_const,
        "f_estimator": args.f_estimator,
        "instances": meta_rows,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    for p in written:
        print(p)
    print(out / "plot.svg")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "solve-lp": cmd_solve_lp,
    "estimate-f": cmd_estimate_f,
    "simulate": cmd_simulate,
    "mdp": cmd_mdp,
    "ingest": cmd_ingest,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"stocsched: error: {exc}", file=sys.stderr)
        return 2
    except (StocSchedError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
