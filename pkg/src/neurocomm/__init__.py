"""Communication planning for multi-GPU neuron-graph workloads.

The pipeline has four stages: generate a synthetic neuron graph, place
neurons onto GPUs under a traffic-balance objective, route GPU-to-GPU
traffic either directly or through per-group bridge GPUs, and evaluate the
resulting per-step communication latency on an analytic two-tier fabric
model.
"""

from .errors import MissingBridgeError, ParseError, SpecificationError
from .model import (
    ModelSpec,
    NeuronGraph,
    ValidationReport,
    generate_synthetic,
    load_graph,
    save_graph,
    validate,
)
from .netsim import (
    PhysicalTopology,
    StepLatencyReport,
    TopologySpec,
    build_topology,
    map_flows,
    step_latency,
    sweep_noise,
)
from .partition import (
    GaConfig,
    PartitionConfig,
    PartitionMap,
    cross_traffic,
    partition_genetic,
    partition_greedy,
    partition_random,
)
from .routing import (
    ConnectionStats,
    GroupAssignment,
    RoutingTable,
    build_routing_table,
    connection_stats,
    group_gpus,
    level2_traffic,
    route_p2p,
    select_bridges,
)
from .traffic import (
    GpuTrafficGraph,
    TrafficReport,
    aggregate,
    peak_reduction,
    per_gpu_send_traffic,
)

__version__ = "0.1.0"
