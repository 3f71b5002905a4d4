"""Robust cross-validated causal discovery for multivariate time series.

Subpackages cover the shared domain types (:mod:`rcvcausal.core`), a
ground-truthed VAR data generator (:mod:`rcvcausal.synthgen`), two base
discovery methods (:mod:`rcvcausal.varlingam`, :mod:`rcvcausal.pcmci`),
the cross-validated wrapper (:mod:`rcvcausal.rcv`), graph comparison
metrics (:mod:`rcvcausal.metrics`), the ABM validation pipeline
(:mod:`rcvcausal.framework`) and a command line front end
(:mod:`rcvcausal.cli`).
"""

__version__ = "0.1.0"

from rcvcausal.core import (
    CausalGraph,
    CoefficientStack,
    EdgeKey,
    ShapeMismatch,
    TimeSeriesDataset,
    stack_to_graph,
    summary_graph,
)

__all__ = [
    "CausalGraph",
    "CoefficientStack",
    "EdgeKey",
    "ShapeMismatch",
    "TimeSeriesDataset",
    "stack_to_graph",
    "summary_graph",
    "__version__",
]
