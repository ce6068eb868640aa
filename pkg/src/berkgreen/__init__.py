"""Potential theory on metric-graph models of non-archimedean curves."""

__version__ = "0.1.0"
