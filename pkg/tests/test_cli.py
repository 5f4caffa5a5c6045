import json

import pytest

from neurocomm.cli import main
from neurocomm.model import ModelSpec, generate_synthetic, load_graph, save_graph
from neurocomm.netsim import TopologySpec, sweep_noise, write_sweep_csv
from neurocomm.partition import load_partition_map, partition_greedy
from neurocomm.routing import build_routing_table, group_gpus, select_bridges


def run(*argv):
    return main([str(a) for a in argv])


def gen_graph(tmp_path, name="graph.nng", **overrides):
    args = {
        "neurons": 64,
        "communities": 4,
        "p_in": 0.5,
        "p_out": 0.05,
        "seed": 3,
    }
    args.update(overrides)
    path = tmp_path / name
    code = run(
        "gen",
        "--neurons", args["neurons"],
        "--communities", args["communities"],
        "--p-in", args["p_in"],
        "--p-out", args["p_out"],
        "--seed", args["seed"],
        "--out", path,
        "--quiet",
    )
    assert code == 0
    return path


class TestGen:
    def test_writes_empty_graph(self, tmp_path, capsys):
        path = tmp_path / "empty.nng"
        assert run("gen", "--neurons", 4, "--communities", 1,
                   "--p-in", 0, "--p-out", 0, "--out", path) == 0
        out = capsys.readouterr().out
        assert "neurons=4" in out and "edges=0" in out
        g = load_graph(path)
        assert g.n_neurons == 4 and g.n_edges == 0

    def test_missing_out_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run("gen", "--neurons", 4, "--communities", 1, "--p-in", 0, "--p-out", 0)
        assert err.value.code == 2

    def test_repeat_is_byte_identical(self, tmp_path):
        a = gen_graph(tmp_path, "a.nng", neurons=1000, communities=8, p_in=0.3, p_out=0.01, seed=42)
        b = gen_graph(tmp_path, "b.nng", neurons=1000, communities=8, p_in=0.3, p_out=0.01, seed=42)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_probabilities_exit_2(self, tmp_path, capsys):
        assert run("gen", "--neurons", 4, "--communities", 1, "--p-in", 0.1,
                   "--p-out", 0.5, "--out", tmp_path / "x.nng") == 2
        assert "p_out" in capsys.readouterr().err


class TestPartition:
    def test_greedy_metrics(self, tmp_path):
        graph = tmp_path / "g4.nng"
        from conftest import make_graph
        save_graph(
            make_graph(4, [1, 1, 1, 1],
                       [(0, 1, 0.9), (2, 3, 0.9), (0, 2, 0.1), (0, 3, 0.1), (1, 2, 0.1), (1, 3, 0.1)]),
            graph,
        )
        out = tmp_path / "run"
        assert run("partition", graph, "--algo", "greedy", "--gpus", 2,
                   "--out-dir", out, "--quiet") == 0
        metrics = json.loads((out / "partition_metrics.json").read_text())
        assert metrics["cross_traffic"] == 0.4
        assert metrics["n_gpus"] == 2
        pm = load_partition_map(out / "partition.pmap")
        assert pm.n_gpus == 2

    def test_single_gpu_all_zero(self, tmp_path):
        graph = gen_graph(tmp_path)
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 1, "--out-dir", out, "--quiet") == 0
        pm = load_partition_map(out / "partition.pmap")
        assert set(pm.assignment.tolist()) == {0}
        metrics = json.loads((out / "partition_metrics.json").read_text())
        assert metrics["cross_traffic"] == 0.0

    def test_unknown_algo_is_usage_error(self, tmp_path):
        graph = gen_graph(tmp_path)
        with pytest.raises(SystemExit) as err:
            run("partition", graph, "--algo", "anneal", "--gpus", 2)
        assert err.value.code == 2

    def test_missing_graph_exit_2(self, tmp_path, capsys):
        assert run("partition", tmp_path / "nope.nng", "--gpus", 2, "--quiet") == 2
        assert "nope.nng" in capsys.readouterr().err

    def test_corrupt_graph_exit_1(self, tmp_path):
        bad = tmp_path / "bad.nng"
        bad.write_text("NNG 1 2 1\n1.0\n1.0\n0 2 0.5\n")
        assert run("partition", bad, "--gpus", 2, "--out-dir", tmp_path, "--quiet") == 1


class TestRoute:
    def test_p2p_out_degrees(self, tmp_path):
        graph = gen_graph(tmp_path, neurons=32, communities=4, p_in=0.9, p_out=0.2)
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 4, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--mode", "p2p",
                   "--out-dir", out, "--quiet") == 0
        summary = json.loads((out / "connections_summary.json").read_text())
        assert summary["mean_out_degree"] == 3.0
        assert (out / "level2.csv").exists()
        assert (out / "connections.csv").read_text().splitlines()[0] == "bin_start,bin_end,count"

    def test_two_level_groups(self, tmp_path):
        graph = gen_graph(tmp_path, neurons=64, communities=8, p_in=0.9, p_out=0.1)
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 8, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--mode", "two-level",
                   "--groups", 2, "--out-dir", out, "--quiet") == 0
        assert (out / "routing.rtab").read_text().startswith("RTAB 1 8 2\n")

    def test_zero_groups_is_usage_error(self, tmp_path, capsys):
        graph = gen_graph(tmp_path)
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 4, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--groups", 0,
                   "--out-dir", out, "--quiet") == 2
        assert "--groups" in capsys.readouterr().err

    def test_two_level_out_degrees_on_tight_pairs(self, tmp_path):
        # one neuron per GPU: the GPU traffic matrix mirrors the edge values
        graph = tmp_path / "g4.nng"
        from conftest import make_graph
        save_graph(
            make_graph(4, [1, 1, 1, 1],
                       [(0, 1, 0.9), (2, 3, 0.9), (0, 2, 0.1), (0, 3, 0.1), (1, 2, 0.1), (1, 3, 0.1)]),
            graph,
        )
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 4, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--mode", "two-level",
                   "--groups", 2, "--out-dir", out, "--quiet") == 0
        summary = json.loads((out / "connections_summary.json").read_text())
        # out-degrees are {3, 1, 3, 1}: bridges fan out, their mates reach only them
        assert summary["mean_out_degree"] == 2.0
        assert summary["max_out_degree"] == 3


class TestSimulate:
    def test_sweep_csv_written(self, tmp_path):
        graph = gen_graph(tmp_path)
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 8, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--out-dir", out, "--quiet") == 0
        assert run("simulate", graph, out / "partition.pmap", out / "routing.rtab",
                   "--noise", 0.1, 0.7, "--out-dir", out, "--quiet") == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "noise,step_time_s,setup_time_s,max_link_utilization,bottleneck_link"
        assert len(lines) == 3  # noise 0.7 is within (0, 1] and accepted

    def test_empty_demand_means_zero_step_times(self, tmp_path):
        graph = gen_graph(tmp_path, neurons=8, communities=1, p_in=0, p_out=0)
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 4, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--out-dir", out, "--quiet") == 0
        assert run("simulate", graph, out / "partition.pmap", out / "routing.rtab",
                   "--out-dir", out, "--quiet") == 0
        rows = (out / "sweep.csv").read_text().splitlines()[1:]
        assert all(row.split(",")[1] == "0.0" for row in rows)

    def test_out_of_range_noise_is_usage_error(self, tmp_path):
        graph = gen_graph(tmp_path)
        out = tmp_path / "run"
        assert run("partition", graph, "--gpus", 8, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--out-dir", out, "--quiet") == 0
        assert run("simulate", graph, out / "partition.pmap", out / "routing.rtab",
                   "--noise", 0.0, "--out-dir", out, "--quiet") == 2

    def test_topology_file_is_honored(self, tmp_path):
        graph = gen_graph(tmp_path)
        out = tmp_path / "run"
        custom = tmp_path / "custom"
        topo = tmp_path / "topo.json"
        topo.write_text('{"gpus_per_node": 1, "nodes_per_switch": 2, "inter_node_bandwidth": 16.0}\n')
        assert run("partition", graph, "--gpus", 8, "--out-dir", out, "--quiet") == 0
        assert run("route", graph, out / "partition.pmap", "--out-dir", out, "--quiet") == 0
        assert run("simulate", graph, out / "partition.pmap", out / "routing.rtab",
                   "--out-dir", out, "--quiet") == 0
        assert run("simulate", graph, out / "partition.pmap", out / "routing.rtab",
                   "--topo", topo, "--out-dir", custom, "--quiet") == 0
        assert (out / "sweep.csv").read_text() != (custom / "sweep.csv").read_text()


class TestPipelineAndCompare:
    def run_pipeline(self, tmp_path, name, algo, mode, seed=7):
        out = tmp_path / name
        code = run(
            "pipeline",
            "--neurons", 256, "--communities", 16, "--p-in", 0.6, "--p-out", 0.01,
            "--gpus", 16, "--algo", algo, "--mode", mode, "--groups", 4,
            "--seed", seed, "--out-dir", out, "--quiet",
        )
        assert code == 0
        return out

    def test_pipeline_emits_all_artifacts(self, tmp_path):
        out = self.run_pipeline(tmp_path, "run", "greedy", "two-level")
        for name in (
            "graph.nng", "partition.pmap", "partition_metrics.json",
            "traffic.csv", "traffic_summary.json", "routing.rtab",
            "connections.csv", "connections_summary.json",
            "level2.csv", "level2_summary.json", "sweep.csv",
        ):
            assert (out / name).exists(), name

    def test_pipeline_deterministic_bytes(self, tmp_path):
        a = self.run_pipeline(tmp_path, "a", "greedy", "two-level")
        b = self.run_pipeline(tmp_path, "b", "greedy", "two-level")
        for name in ("graph.nng", "partition.pmap", "routing.rtab", "traffic.csv",
                     "connections.csv", "level2.csv", "sweep.csv",
                     "partition_metrics.json", "traffic_summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_compare_self_is_all_zero(self, tmp_path, capsys):
        out = self.run_pipeline(tmp_path, "run", "greedy", "two-level")
        assert run("compare", out, out, "--quiet") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["traffic_peak_reduction_pct"] == 0.0
        assert payload["level2_peak_reduction_pct"] == 0.0
        assert all(v == 1.0 for v in payload["step_time_ratio_by_noise"].values())

    def test_compare_baseline_vs_planned(self, tmp_path, capsys):
        base = self.run_pipeline(tmp_path, "base", "random", "p2p")
        cand = self.run_pipeline(tmp_path, "cand", "greedy", "two-level")
        assert run("compare", base, cand, "--out", tmp_path / "cmp.json", "--quiet") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["traffic_peak_reduction_pct"] > 0.0
        assert payload["level2_peak_reduction_pct"] > 0.0
        assert payload["out_degree_mean_candidate"] < payload["out_degree_mean_baseline"]
        assert all(v < 1.0 for v in payload["step_time_ratio_by_noise"].values())
        assert json.loads((tmp_path / "cmp.json").read_text()) == payload

    def test_compare_missing_file_exit_2(self, tmp_path, capsys):
        out = self.run_pipeline(tmp_path, "run", "greedy", "two-level")
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run("compare", out, empty, "--quiet") == 2
        assert "traffic.csv" in capsys.readouterr().err

    def test_pipeline_needs_graph_or_neurons(self, tmp_path, capsys):
        assert run("pipeline", "--gpus", 4, "--out-dir", tmp_path / "x", "--quiet") == 2
        assert "--graph or --neurons" in capsys.readouterr().err


class TestSerializationTransparency:
    def test_file_pipeline_matches_in_process_run(self, tmp_path):
        spec = ModelSpec(256, 16, 0.6, 0.01, seed=7)
        graph_path = tmp_path / "graph.nng"
        save_graph(generate_synthetic(spec), graph_path)
        out = tmp_path / "run"
        assert run("partition", graph_path, "--algo", "greedy", "--gpus", 16,
                   "--out-dir", out, "--quiet") == 0
        assert run("route", graph_path, out / "partition.pmap", "--mode", "two-level",
                   "--groups", 4, "--out-dir", out, "--quiet") == 0
        assert run("simulate", graph_path, out / "partition.pmap", out / "routing.rtab",
                   "--out-dir", out, "--quiet") == 0

        def router(gt):
            groups = group_gpus(gt, 4)
            return build_routing_table(gt, groups, select_bridges(gt, groups))

        reports = sweep_noise(
            load_graph(graph_path),
            lambda g: partition_greedy(g, 16),
            router,
            TopologySpec(),
        )
        expected = tmp_path / "expected.csv"
        write_sweep_csv(reports, expected)
        assert expected.read_bytes() == (out / "sweep.csv").read_bytes()
