"""Orchestration engine for evolutionary ensembles of coding agents.

Two populations co-evolve per run: solver file-trees scored by a pluggable
evaluator, and agent guidance-trees rated by Elo over synchronous races in
isolated workspaces. See the README for the run-directory layout and the
agent/evaluator file protocols.
"""

from .model import (
    AgentRecord,
    IterationResult,
    RunConfig,
    RunState,
    SolverRecord,
    TokenUsage,
)
from .orchestrator import Orchestrator, initialize_run, select_best_agent
from .storage import load_state, verify_run

__version__ = "0.1.0"

__all__ = [
    "AgentRecord",
    "IterationResult",
    "Orchestrator",
    "RunConfig",
    "RunState",
    "SolverRecord",
    "TokenUsage",
    "initialize_run",
    "load_state",
    "select_best_agent",
    "verify_run",
]
