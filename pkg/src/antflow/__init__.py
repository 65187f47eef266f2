"""Trace-reinforced ant process toolkit.

Simulation, exact trace probabilities, mean-field flow integration,
limit predictions, and experiment orchestration for marked multigraphs
where each ant reinforces the edges its path crossed.
"""

from .electrical import (
    ElectricalError,
    bipartite_conductance,
    effective_conductance,
    green_function,
    merged_bipartite_graph,
    returns_to_nest_mean,
    stationary_measure,
)
from .field import (
    FieldError,
    FieldEvaluation,
    closed_form_cone,
    closed_form_losange,
    closed_form_two_paths,
    cone_probabilities,
    exact_trace_probability,
    lipschitz_bound,
    losange_factored_f2,
    losange_lambdas,
    losange_probabilities,
    membership_E,
    two_paths_edge_ids,
    two_paths_probabilities,
)
from .flow import (
    BatchFlowResult,
    FlowError,
    FlowTrajectory,
    integrate,
    integrate_batch,
    losange_lyapunov,
    lyapunov_trace_losange,
    rest_points,
    sample_in_basin,
)
from .graph import (
    FamilyTag,
    GraphError,
    GraphFamily,
    MarkedGraph,
    ParseError,
    PathCatalog,
    PathLimitError,
    classify,
    cone_graph,
    enumerate_paths,
    graph_hash,
    losange_graph,
    parse_experiment,
    parse_graph,
    serialize_graph,
    single_edge_graph,
    tree_like_graph,
    two_paths_graph,
)
from .harness import (
    ConvergenceReport,
    ExperimentConfig,
    HarnessError,
    emit_plot_script,
    geometric_schedule,
    run_experiment,
    verify_suite,
)
from .limits import (
    DirichletLaw,
    LimitError,
    LimitPrediction,
    SandwichState,
    contraction_fp,
    limit_cone,
    limit_losange,
    limit_tree_like,
    limit_two_paths,
    losange_cubic,
    losange_root,
    power_system_residual,
    predict_limit,
    response_system_residual,
    sandwich_iteration,
    terminal_response,
)
from .urn import (
    DominationReport,
    UrnError,
    UrnSpec,
    direct_edge_g,
    domination_check,
    parse_g_spec,
    polya_g,
    ratio_g,
    simulate_urn,
    simulate_urn_replicas,
    stable_fixed_points,
    tabulated_g,
)
from .walk import (
    ProcessState,
    ProcessTrajectory,
    TraceRecord,
    WalkCapExceeded,
    WalkError,
    martingale_residuals,
    read_trajectory_csv,
    residual_partial_sums,
    run_process,
    sample_walk,
    trace_frequencies,
    write_trajectory_csv,
)

# keep submodule attributes authoritative; in particular the drift
# evaluator field.field must not shadow the field module itself
from . import electrical, field, flow, graph, harness, limits, urn, walk  # noqa: E402,F401

__version__ = "0.1.0"
