"""Layer-aware, resource-adaptive container scheduling.

A scheduling library (filter, score, bind over image-layer overlap and
resource balance), a deterministic cluster simulator for comparing
policies, and a Docker-Registry-v2 metadata client that maintains the
layer cache the scorer reads.
"""

from .errors import (
    CacheCorrupt,
    CapacityViolation,
    ComparisonError,
    DigestSizeConflict,
    LayerSchedError,
    RegistryProtocolError,
    RegistryUnavailable,
    ScenarioError,
    TraceCorrupt,
    UnknownImage,
    UnsupportedManifest,
)
from .model import (
    ImageRef,
    LayerCatalog,
    LayerId,
    NodeSpec,
    NodeState,
    PlacedContainer,
    TaskRequest,
    commit_placement,
    layers_of,
    missing_layers,
)
from .registry import (
    ImageMetadata,
    ImageMetadataLists,
    LayerMetadata,
    RegistryClient,
    RegistryConfig,
    RegistryWatcher,
    catalog_from_cache,
    load_cache,
    lookup,
    refresh_cache,
    save_cache,
)
from .scheduler import (
    POLICIES,
    FilterVerdict,
    Placement,
    SchedulerConfig,
    TraceResult,
    Unschedulable,
    filter_node,
    iter_schedule_trace,
    schedule,
    schedule_trace,
    score_node,
)
from .scoring import (
    MB,
    PluginConfig,
    ScoreBreakdown,
    WeightPolicy,
    baseline_score,
    cpu_score,
    download_cost,
    final_score,
    layer_score,
    local_layer_size,
    std_score,
    weight_gate,
)
from .simulator import (
    ComparisonReport,
    MaxPodsResult,
    Scenario,
    SimulationReport,
    StepMetrics,
    compare,
    max_pods,
    run,
    write_report_json,
    write_steps_csv,
)
from .scenario import build_scenario, parse_scenario_file, resolve_catalog
from .workload import WorkloadSpec, generate, load_trace, save_trace

__version__ = "0.1.0"

__all__ = [
    "CacheCorrupt",
    "CapacityViolation",
    "ComparisonError",
    "ComparisonReport",
    "DigestSizeConflict",
    "FilterVerdict",
    "ImageMetadata",
    "ImageMetadataLists",
    "ImageRef",
    "LayerCatalog",
    "LayerId",
    "LayerMetadata",
    "LayerSchedError",
    "MaxPodsResult",
    "MB",
    "NodeSpec",
    "NodeState",
    "POLICIES",
    "PlacedContainer",
    "Placement",
    "PluginConfig",
    "RegistryClient",
    "RegistryConfig",
    "RegistryProtocolError",
    "RegistryUnavailable",
    "RegistryWatcher",
    "Scenario",
    "ScenarioError",
    "SchedulerConfig",
    "ScoreBreakdown",
    "SimulationReport",
    "StepMetrics",
    "TaskRequest",
    "TraceCorrupt",
    "TraceResult",
    "UnknownImage",
    "UnsupportedManifest",
    "Unschedulable",
    "WeightPolicy",
    "WorkloadSpec",
    "baseline_score",
    "build_scenario",
    "catalog_from_cache",
    "commit_placement",
    "compare",
    "cpu_score",
    "download_cost",
    "filter_node",
    "final_score",
    "generate",
    "iter_schedule_trace",
    "layer_score",
    "layers_of",
    "load_cache",
    "load_trace",
    "local_layer_size",
    "lookup",
    "max_pods",
    "missing_layers",
    "parse_scenario_file",
    "refresh_cache",
    "resolve_catalog",
    "run",
    "save_cache",
    "save_trace",
    "schedule",
    "schedule_trace",
    "score_node",
    "std_score",
    "weight_gate",
    "write_report_json",
    "write_steps_csv",
]
