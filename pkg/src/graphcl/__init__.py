"""Continual graph learning with feature-topology fused experience replay."""

from .graph import (
    ComponentLabeling,
    Graph,
    SignedAdjacency,
    antisymmetric_adjacency,
    build_graph,
    connected_components,
    degree_vector,
    divergence,
    induced_subgraph,
    laplacian_matvec,
    largest_connected_component,
    read_edge_list,
    undirected_support,
)
from .hodge import (
    EdgeFlow,
    HodgeDecomposition,
    PotentialScores,
    SolverConfig,
    SolverConvergenceError,
    canonical_edges,
    curl,
    decompose_edge_flow,
    enumerate_triangles,
    flow_divergence,
    grad_of_potential,
    hodge_potential_score,
    min_norm_laplacian_solve,
)
from .gnn import (
    GnnModel,
    ModelConfig,
    NormalizedAdjacency,
    adam_init,
    adam_step,
    class_mask,
    evaluate_accuracy,
    forward,
    init_model,
    loss_and_grad,
    normalize_adjacency,
    per_node_grad_norm,
    propagation_matrix,
)
from .scoring import (
    FusionConfig,
    ScoreVector,
    baseline_scores,
    fuse_scores,
    grand_scores,
    minmax_normalize,
    select_deterministic,
    select_probabilistic,
    topo_scores,
)
from .replay import ExperienceBuffer, buffer_stats, combined_loss, empty_buffer, update_buffer
from .data import DatasetBundle, SbmConfig, benchmark_sbm_config, generate_sbm, load_dataset, preprocess, write_dataset
from .harness import (
    AccuracyMatrix,
    RunConfig,
    RunResult,
    Split,
    Task,
    average_accuracy,
    average_forgetting,
    partition_tasks,
    run,
    run_continual,
    run_joint,
    split_nodes,
    task_nodes_by_role,
)

__version__ = "0.1.0"
