"""Exceedance-based local dimension estimation and its failure diagnostics.

Submodules
----------
systems
    Maps, symbolic shifts and flows behind one stepping interface.
measures
    Exact Cantor ball measure and the solenoid branch-sum approximation.
recurrence
    Shrinking-ball recurrence buffers, zoom traces and ensembles.
estimators
    EBD fit, R(r) ratio, correlation-sum dimension, extremal index.
experiments
    Seeded pipelines writing plot-ready tables.
"""
__version__ = "0.1.0"

from . import estimators, measures, systems  # noqa: E402
from . import recurrence  # noqa: E402
from . import experiments  # noqa: E402

__all__ = ["systems", "measures", "recurrence", "estimators", "experiments", "__version__"]
