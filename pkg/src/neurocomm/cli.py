"""Batch pipeline driver: gen -> partition -> route -> simulate -> compare.

Each subcommand reads and writes plain files, so stages can be rerun,
cached, and diffed independently; ``pipeline`` chains them in one process.
Exit codes: 0 success, 1 runtime/model error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import model, netsim, partition, routing, traffic
from .errors import MissingBridgeError, ParseError, SpecificationError


class UsageError(Exception):
    """Bad flag values or unusable inputs; maps to exit code 2."""


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"missing file: {p}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _model_spec_from(args) -> model.ModelSpec:
    return model.ModelSpec(
        n_neurons=args.neurons,
        n_communities=args.communities,
        p_in=args.p_in,
        p_out=args.p_out,
        weight_low=args.weight_low,
        weight_high=args.weight_high,
        seed=args.seed,
    )


def _generate_from(args) -> model.NeuronGraph:
    spec = _model_spec_from(args)
    kwargs = {}
    if args.p_intra_range is not None:
        kwargs["intra_p_range"] = tuple(args.p_intra_range)
    if args.p_inter_range is not None:
        kwargs["inter_p_range"] = tuple(args.p_inter_range)
    return model.generate_synthetic(spec, **kwargs)


def cmd_gen(args) -> int:
    graph = _generate_from(args)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    model.save_graph(graph, out)
    _say(args, f"wrote {out}: neurons={graph.n_neurons} edges={graph.n_edges} seed={args.seed}")
    return 0


def _partition_with(args, graph: model.NeuronGraph) -> partition.PartitionMap:
    if args.gpus < 1:
        raise UsageError(f"--gpus must be >= 1, got {args.gpus}")
    if args.gpus > graph.n_neurons:
        raise UsageError(
            f"--gpus must be <= the neuron count ({graph.n_neurons}), got {args.gpus}"
        )
    if args.algo == "greedy":
        cfg = partition.PartitionConfig(
            max_iterations=args.max_iterations, balance_slack=args.balance_slack
        )
        return partition.partition_greedy(graph, args.gpus, cfg)
    if args.algo == "random":
        return partition.partition_random(graph, args.gpus, seed=args.seed)
    cfg = partition.GaConfig(
        population_size=args.ga_population,
        generations=args.ga_generations,
        tournament_size=args.ga_tournament,
        crossover_rate=args.ga_crossover_rate,
        mutation_rate=args.ga_mutation_rate,
        seed=args.seed,
    )
    return partition.partition_genetic(graph, args.gpus, cfg)


def _write_partition_outputs(args, out: Path, graph, pm) -> None:
    partition.save_partition_map(pm, out / "partition.pmap")
    gt = traffic.aggregate(graph, pm)
    report = traffic.per_gpu_send_traffic(gt)
    traffic.write_traffic_csv(report, out / "traffic.csv")
    traffic.write_traffic_summary(report, out / "traffic_summary.json")
    wg = gt.wg
    metrics = {
        "algorithm": args.algo,
        "n_neurons": graph.n_neurons,
        "n_gpus": pm.n_gpus,
        "cross_traffic": partition.cross_traffic(graph, pm),
        "gpu_weight_max": float(wg.max()),
        "gpu_weight_min": float(wg.min()),
        "gpu_weight_mean": float(wg.mean()),
        "gpu_weight_target": math.fsum(graph.weights) / pm.n_gpus,
        "seed": args.seed,
    }
    with open(out / "partition_metrics.json", "w", newline="\n") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(
        args,
        f"wrote {out / 'partition.pmap'}: algo={args.algo} gpus={pm.n_gpus} "
        f"cross_traffic={metrics['cross_traffic']!r}",
    )


def cmd_partition(args) -> int:
    graph = model.load_graph(_require_file(args.graph))
    pm = _partition_with(args, graph)
    _write_partition_outputs(args, _out_dir(args), graph, pm)
    return 0


def _route_with(args, gt: traffic.GpuTrafficGraph) -> routing.RoutingTable:
    if args.mode == "p2p":
        return routing.route_p2p(gt)
    if args.groups is None:
        n_groups = max(1, min(round(math.sqrt(gt.n_gpus)), gt.n_gpus))
    else:
        n_groups = args.groups
        if not 1 <= n_groups <= gt.n_gpus:
            raise UsageError(f"--groups must be in [1, {gt.n_gpus}], got {n_groups}")
    groups = routing.group_gpus(gt, n_groups)
    bridges = routing.select_bridges(gt, groups)
    return routing.build_routing_table(gt, groups, bridges)


def _write_route_outputs(args, out: Path, gt, rt) -> None:
    routing.save_routing_table(rt, out / "routing.rtab")
    stats = routing.connection_stats(rt, bucket_width=args.bucket_width)
    routing.write_connection_csv(stats, out / "connections.csv")
    routing.write_connection_summary(stats, out / "connections_summary.json")
    level2 = routing.level2_traffic(gt, rt)
    level2_report = traffic.report_from_vector(level2)
    traffic.write_traffic_csv(level2_report, out / "level2.csv", value_column="level2_traffic")
    traffic.write_traffic_summary(level2_report, out / "level2_summary.json")
    _say(
        args,
        f"wrote {out / 'routing.rtab'}: mode={args.mode} groups={rt.n_groups} "
        f"mean_out_degree={stats.mean!r}",
    )


def cmd_route(args) -> int:
    graph = model.load_graph(_require_file(args.graph))
    pm = partition.load_partition_map(_require_file(args.pmap))
    gt = traffic.aggregate(graph, pm)
    rt = _route_with(args, gt)
    _write_route_outputs(args, _out_dir(args), gt, rt)
    return 0


def _noise_levels(args) -> list[float]:
    noises = args.noise if args.noise else list(netsim.DEFAULT_NOISE_LEVELS)
    for nu in noises:
        if not 0.0 < nu <= 1.0:
            raise UsageError(f"--noise values must be in (0, 1], got {nu}")
    return noises


def _topo_spec(args) -> netsim.TopologySpec:
    if args.topo is None:
        return netsim.TopologySpec()
    return netsim.load_topology_spec(_require_file(args.topo))


def _write_sweep_outputs(args, out: Path, gt, rt, spec, noises) -> None:
    topo = netsim.build_topology(spec, gt.n_gpus)
    reports = []
    for nu in noises:
        loads = netsim.map_flows(rt, gt, topo, nu)
        reports.append(netsim.step_latency(loads, rt, topo, noise=nu))
    netsim.write_sweep_csv(reports, out / "sweep.csv")
    _say(args, f"wrote {out / 'sweep.csv'}: {len(reports)} noise levels")


def cmd_simulate(args) -> int:
    graph = model.load_graph(_require_file(args.graph))
    pm = partition.load_partition_map(_require_file(args.pmap))
    rt = routing.load_routing_table(_require_file(args.rtab))
    gt = traffic.aggregate(graph, pm)
    _write_sweep_outputs(args, _out_dir(args), gt, rt, _topo_spec(args), _noise_levels(args))
    return 0


def cmd_pipeline(args) -> int:
    out = _out_dir(args)
    if args.graph is not None:
        graph = model.load_graph(_require_file(args.graph))
    else:
        if args.neurons is None:
            raise UsageError("either --graph or --neurons is required")
        graph = _generate_from(args)
        model.save_graph(graph, out / "graph.nng")
        _say(args, f"wrote {out / 'graph.nng'}: neurons={graph.n_neurons} edges={graph.n_edges}")
    pm = _partition_with(args, graph)
    _write_partition_outputs(args, out, graph, pm)
    gt = traffic.aggregate(graph, pm)
    rt = _route_with(args, gt)
    _write_route_outputs(args, out, gt, rt)
    _write_sweep_outputs(args, out, gt, rt, _topo_spec(args), _noise_levels(args))
    return 0


def _read_run_dir(where: Path) -> dict:
    data = {}
    data["traffic"] = traffic.read_traffic_csv(_require_file(where / "traffic.csv"))
    data["level2"] = traffic.read_traffic_csv(_require_file(where / "level2.csv"))
    with open(_require_file(where / "connections_summary.json")) as fh:
        data["connections"] = json.load(fh)
    data["sweep"] = netsim.read_sweep_csv(_require_file(where / "sweep.csv"))
    return data


def _reduction(baseline: traffic.TrafficReport, candidate: traffic.TrafficReport) -> float:
    if baseline.peak == candidate.peak:
        return 0.0
    return traffic.peak_reduction(baseline, candidate)


def cmd_compare(args) -> int:
    base = _read_run_dir(Path(args.baseline))
    cand = _read_run_dir(Path(args.candidate))
    ratios = {}
    base_sweep = {repr(r.noise): r for r in base["sweep"]}
    cand_sweep = {repr(r.noise): r for r in cand["sweep"]}
    if set(base_sweep) != set(cand_sweep):
        raise ValueError("run directories were swept at different noise levels")
    for key in sorted(base_sweep, key=float):
        b, c = base_sweep[key].step_time, cand_sweep[key].step_time
        if b == c:
            ratios[key] = 1.0
        elif b == 0.0:
            ratios[key] = None
        else:
            ratios[key] = c / b
    comparison = {
        "traffic_peak_reduction_pct": _reduction(base["traffic"], cand["traffic"]),
        "level2_peak_reduction_pct": _reduction(base["level2"], cand["level2"]),
        "out_degree_mean_baseline": base["connections"]["mean_out_degree"],
        "out_degree_mean_candidate": cand["connections"]["mean_out_degree"],
        "step_time_ratio_by_noise": ratios,
    }
    text = json.dumps(comparison, indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
            fh.write("\n")
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    sub.add_argument("--out-dir", default=".", help="directory for output files")
    sub.add_argument("--quiet", action="store_true", help="suppress progress output")


def _add_gen_flags(sub: argparse.ArgumentParser, required: bool) -> None:
    sub.add_argument("--neurons", type=int, required=required, help="number of neurons")
    sub.add_argument("--communities", type=int, default=1, help="number of planted communities")
    sub.add_argument("--p-in", type=float, default=0.1, help="intra-community edge probability")
    sub.add_argument("--p-out", type=float, default=0.01, help="inter-community edge probability")
    sub.add_argument("--weight-low", type=float, default=1.0, help="lower weight bound")
    sub.add_argument("--weight-high", type=float, default=1.0, help="upper weight bound")
    sub.add_argument(
        "--p-intra-range", type=float, nargs=2, metavar=("LO", "HI"), default=None,
        help="connection-probability range for intra-community edges",
    )
    sub.add_argument(
        "--p-inter-range", type=float, nargs=2, metavar=("LO", "HI"), default=None,
        help="connection-probability range for inter-community edges",
    )


def _add_partition_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--algo", choices=["greedy", "random", "ga"], default="greedy")
    sub.add_argument("--gpus", type=int, required=True, help="number of GPUs")
    sub.add_argument("--max-iterations", type=int, default=1)
    sub.add_argument("--balance-slack", type=float, default=0.0)
    sub.add_argument("--ga-population", type=int, default=64)
    sub.add_argument("--ga-generations", type=int, default=200)
    sub.add_argument("--ga-tournament", type=int, default=3)
    sub.add_argument("--ga-crossover-rate", type=float, default=0.9)
    sub.add_argument("--ga-mutation-rate", type=float, default=None)


def _add_route_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--mode", choices=["p2p", "two-level"], default="two-level")
    sub.add_argument(
        "--groups", type=int, default=None,
        help="number of GPU groups (default: round(sqrt(n_gpus)))",
    )
    sub.add_argument("--bucket-width", type=int, default=16, help="histogram bucket width")


def _add_simulate_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--topo", default=None, help="topology spec JSON (default: built-in)")
    sub.add_argument(
        "--noise", type=float, nargs="+", default=None,
        help="noise levels in (0, 1] (default: 0.1 .. 0.6)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurocomm",
        description=(
            "Plan low-congestion multi-GPU communication for neuron-graph "
            "workloads: generate graphs, place neurons, route GPU traffic, "
            "and model per-step latency."
        ),
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="generate a synthetic neuron graph (NNG file)")
    _add_gen_flags(gen, required=True)
    gen.add_argument("--out", required=True, help="output NNG path")
    _add_common(gen)
    gen.set_defaults(func=cmd_gen)

    part = subs.add_parser("partition", help="assign neurons to GPUs (PMAP + metrics)")
    part.add_argument("graph", help="input NNG file")
    _add_partition_flags(part)
    _add_common(part)
    part.set_defaults(func=cmd_partition)

    route = subs.add_parser("route", help="build a routing table (RTAB + reports)")
    route.add_argument("graph", help="input NNG file")
    route.add_argument("pmap", help="input PMAP file")
    _add_route_flags(route)
    _add_common(route)
    route.set_defaults(func=cmd_route)

    sim = subs.add_parser("simulate", help="sweep noise levels through the latency model")
    sim.add_argument("graph", help="input NNG file")
    sim.add_argument("pmap", help="input PMAP file")
    sim.add_argument("rtab", help="input RTAB file")
    _add_simulate_flags(sim)
    _add_common(sim)
    sim.set_defaults(func=cmd_simulate)

    comp = subs.add_parser("compare", help="compare two run directories")
    comp.add_argument("baseline", help="baseline run directory")
    comp.add_argument("candidate", help="candidate run directory")
    comp.add_argument("--out", default=None, help="also write the comparison JSON here")
    _add_common(comp)
    comp.set_defaults(func=cmd_compare)

    pipe = subs.add_parser("pipeline", help="run gen/partition/route/simulate in one go")
    pipe.add_argument("--graph", default=None, help="existing NNG file (skips generation)")
    _add_gen_flags(pipe, required=False)
    _add_partition_flags(pipe)
    _add_route_flags(pipe)
    _add_simulate_flags(pipe)
    _add_common(pipe)
    pipe.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpecificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 2
    except (ParseError, MissingBridgeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
