from .builder import END, Certificate, CompiledGraph, GraphBuilder, compile_graph
from .checkpoint import (
    Checkpoint,
    FileCheckpointStore,
    MemoryCheckpointStore,
    load_checkpoint,
    save_checkpoint,
)
from .engine import RunConfig, RunSummary, StepRecord, invoke, resume, stream
from .state import APPEND_LIST, REPLACE, ChannelSpec, GraphState

__all__ = [
    "APPEND_LIST",
    "END",
    "REPLACE",
    "Certificate",
    "ChannelSpec",
    "Checkpoint",
    "CompiledGraph",
    "FileCheckpointStore",
    "GraphBuilder",
    "GraphState",
    "MemoryCheckpointStore",
    "RunConfig",
    "RunSummary",
    "StepRecord",
    "compile_graph",
    "invoke",
    "load_checkpoint",
    "resume",
    "save_checkpoint",
    "stream",
]
