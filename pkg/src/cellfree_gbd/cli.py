"""Command line entry point: ``cfgbd run|oracle|check``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import harness
from .baselines import random_grouping
from .beamform import gamma_targets, sinr_all
from .channel import mmse_variance
from .gbd import GbdConfig, beamform_stats, gpga, size_model
from .master import FEASIBILITY, OPTIMALITY, Cut, Loop, all_differ_group_cycles, apply_loop, build_graph, ebsa, gfsa
from .primal import lagrangian, solve_power
from .scenario import InvalidInput, generate_scenario, sample_qos

log = logging.getLogger("cellfree_gbd")


def _split(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _apply_overrides(spec, args):
    changes = {}
    if args.seeds is not None:
        changes["seeds"] = harness.parse_seeds(args.seeds)
    if args.algorithms:
        changes["algorithms"] = _split(args.algorithms)
    if args.beamforming:
        changes["beamforming"] = tuple(b.upper() for b in _split(args.beamforming))
    if args.delta is not None:
        changes["delta"] = args.delta
    if getattr(args, "timing", False):
        changes["timing"] = True
    return spec.replace(**changes) if changes else spec


def cmd_run(args) -> int:
    spec = _apply_overrides(harness.load_spec(args.spec), args)
    out = harness.resolve_output(spec, args.out)
    log.info("running %s: %d sweep points x %d seeds x %d algorithms x %d beamformers -> %s",
             spec.name, len(spec.values), len(spec.seeds), len(spec.algorithms), len(spec.beamforming), out)
    rows = harness.run_experiment(spec, jobs=args.jobs)
    harness.write_outputs(spec, rows, out)
    crashed = [r for r in rows if r.crashed]
    infeasible = sum(not r.feasible for r in rows) - len(crashed)
    print(f"{len(rows)} runs, {infeasible} recorded infeasible, {len(crashed)} crashed -> {out / 'results.csv'}")
    for r in crashed:
        print(f"  crash: sweep={r.sweep} {r.algorithm}/{r.beamforming} seed={r.seed}: {r.error}", file=sys.stderr)
    return 1 if crashed else 0


def cmd_oracle(args) -> int:
    spec = _apply_overrides(harness.load_spec(args.spec), args)
    out = harness.resolve_output(spec, args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = harness.oracle_rows(spec)
    lines = ["sweep,beamforming,seed,gpga_w,brute_force_w,match"]
    for value, bf, seed, got, ref, ok in results:
        lines.append(f"{value},{bf},{seed},{got!r},{ref!r},{str(ok).lower()}")
    (out / "oracle.csv").write_text("\n".join(lines) + "\n")
    matches = sum(r[-1] for r in results)
    print(f"GPGA matched exhaustive search on {matches}/{len(results)} instances -> {out / 'oracle.csv'}")
    return 0


def invariant_suite(num: int = 10, seed: int = 0):
    """Quick self-checks on small random instances; yields ``(name, ok, detail)``."""
    rng = np.random.default_rng(seed)
    radio = harness.DESK_RADIO

    # estimation variance grows with pilot power and lies in (0, beta)
    beta = 10 ** rng.uniform(-13, -9, size=50)
    a1 = mmse_variance(beta, 4, 0.1, 1e-13)
    a2 = mmse_variance(beta, 4, 0.2, 1e-13)
    yield "alpha in (0, beta), increasing in pilot power", bool(np.all((a1 > 0) & (a1 < beta) & (a2 > a1))), ""

    kkt = sinr_gap = ident = duality = 0.0
    bounds_ok = True
    ebsa_ok = gfsa_ok = True
    for s in range(num):
        sc = generate_scenario(radio, 6, 6, s)
        qos = sample_qos(6, 1e5, 1.5e6, s)
        cfg = GbdConfig(num_groups=2)
        x = random_grouping(6, 2, s)
        bs = beamform_stats(sc, x, cfg)
        gamma = gamma_targets(qos, radio, x)
        out = solve_power(bs, x, gamma)
        kkt = max(kkt, out.kkt_residual)
        if out.feasible:
            sinr = sinr_all(bs, x, out.q.q)
            act = gamma > 0
            sinr_gap = max(sinr_gap, float(np.max(1 - sinr[act] / gamma[act], initial=0.0)))
            cut = Cut(OPTIMALITY, out.q, out.duals, bs, gamma, size_model(sc, qos, cfg))
        else:
            cut = Cut(FEASIBILITY, out.q, out.duals, bs, gamma, size_model(sc, qos, cfg))
        graph = build_graph(cut, x)
        cycles = all_differ_group_cycles(graph)
        for nodes, w in cycles[:20]:
            loop = Loop(tuple(nodes), w, tuple(int(graph.group_of[v]) for v in nodes))
            y = apply_loop(x, loop)
            base = cut.value(x)
            ident = max(ident, abs(cut.value(y) - base - w) / (1 + abs(base)))
        has_neg = any(w < 0 for _, w in cycles)
        ebsa_ok &= (ebsa(graph) is not None) == has_neg
        g = gfsa(graph)
        gfsa_ok &= g is None or g.total_weight < 0
        _, trace = gpga(sc, qos, cfg)
        bounds_ok &= bool(np.all(np.diff(trace.upper[np.isfinite(trace.upper)]) <= 0))
        lo = trace.lower[np.isfinite(trace.lower)]
        bounds_ok &= bool(np.all(np.diff(lo) >= 0))
        if out.feasible:
            lag = lagrangian(out.q.q, out.duals, x, bs, gamma)
            duality = max(duality, abs(lag - out.objective) / out.objective)
    yield "primal KKT residual <= 1e-6", kkt <= 1e-6, f"max {kkt:.2e}"
    yield "Lagrangian equals power at the optimum", duality <= 1e-6, f"max relative {duality:.2e}"
    yield "achieved SINR meets targets", sinr_gap <= 1e-5, f"max shortfall {sinr_gap:.2e}"
    yield "loop weight equals cut change", ident <= 1e-9, f"max {ident:.2e}"
    yield "exact loop search agrees with enumeration", bool(ebsa_ok), ""
    yield "greedy loop search returns negative loops", bool(gfsa_ok), ""
    yield "upper bound nonincreasing, lower bound nondecreasing", bool(bounds_ok), ""


def cmd_check(args) -> int:
    failed = 0
    for name, ok, detail in invariant_suite(args.instances):
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfgbd", description="Joint power allocation and user grouping for cell-free massive MIMO.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("spec", help="TOML experiment file")
        sp.add_argument("--seeds", help="count (20), range (3:7) or list (1,5,9)")
        sp.add_argument("--out", help=f"output directory (default ${harness.OUTPUT_ENV}/<name>)")
        sp.add_argument("--algorithms", help=f"comma separated subset of {','.join(harness.ALGORITHMS)}")
        sp.add_argument("--beamforming", help="MRT, ZF or MRT,ZF")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--delta", type=float)

    run = sub.add_parser("run", help="run a sweep and write CSV and plot data")
    common(run)
    run.add_argument("--timing", action="store_true", help="record wall-clock times (breaks byte-identical reruns)")
    run.set_defaults(func=cmd_run)
    orc = sub.add_parser("oracle", help="compare GPGA with exhaustive search on tiny instances")
    common(orc)
    orc.set_defaults(func=cmd_oracle)
    chk = sub.add_parser("check", help="run the invariant suite")
    chk.add_argument("--instances", type=int, default=10)
    chk.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
