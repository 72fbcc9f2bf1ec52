"""
LangGraph-based data-mixture optimizer.

This package contains the run state definition, the node implementations and
the engine that wires them into the BO loop.
"""

from graph.state import RunState

__all__ = ["RunState"]
