from odoq.simnet._base import (
    Deadlock,
    Direction,
    DuplicateNode,
    Frame,
    LinkSpec,
    MissingRole,
    NodeRole,
    NodeSpec,
    SimError,
    TamperRecord,
    TopologySpec,
    Transcript,
    TranscriptEntry,
    UnknownEndpoint,
    UnknownScenario,
)
from odoq.simnet.nodes import (
    ClientNode,
    OutcomeKind,
    ProxyNode,
    ResolverNode,
    SessionRecord,
    SimNode,
    build_topology,
)
from odoq.simnet.report import (
    AssertionResult,
    FormatError,
    LinkLatencies,
    OverheadReport,
    ScenarioReport,
    ScenarioSpec,
    compare_direct_vs_oblivious,
    count_messages,
)
from odoq.simnet.scenarios import (
    RegisteredScenario,
    ScenarioContext,
    get_scenario,
    list_scenarios,
    measure_direct_vs_oblivious,
    run_scenario,
    run_spec,
    scenario,
)
from odoq.simnet.sim import Sim

__all__ = [
    "AssertionResult",
    "ClientNode",
    "Deadlock",
    "Direction",
    "DuplicateNode",
    "FormatError",
    "Frame",
    "LinkLatencies",
    "LinkSpec",
    "MissingRole",
    "NodeRole",
    "NodeSpec",
    "OutcomeKind",
    "OverheadReport",
    "ProxyNode",
    "RegisteredScenario",
    "ResolverNode",
    "ScenarioContext",
    "ScenarioReport",
    "ScenarioSpec",
    "SessionRecord",
    "Sim",
    "SimError",
    "SimNode",
    "TamperRecord",
    "TopologySpec",
    "Transcript",
    "TranscriptEntry",
    "UnknownEndpoint",
    "UnknownScenario",
    "build_topology",
    "compare_direct_vs_oblivious",
    "count_messages",
    "get_scenario",
    "list_scenarios",
    "measure_direct_vs_oblivious",
    "run_scenario",
    "run_spec",
    "scenario",
]
