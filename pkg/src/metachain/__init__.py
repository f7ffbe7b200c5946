"""Metastable analysis of small-noise systems with log-asymptotic symmetry.

The package is organised around a table of transition costs between the
attractors of a dynamical system.  From that table it builds a hierarchy of
Markov chains (one layer per time-scale), answers "where is the process at
time scale exp(lambda/eps)?" queries, and validates every asymptotic
prediction against exact finite-noise computations and Monte Carlo.  A
concrete planar two-disk system provides costs, branching weights and SDE
trajectories for the continuous-state side of the story.
"""

from .hierarchy import (
    QuasiPotentialMatrix,
    ArrowDiagram,
    Chain,
    Hierarchy,
    RowAllInfinite,
    compute_alphas,
    partition_chains,
    chain_characteristics,
    lift_costs,
    build_hierarchy,
    detect_rough_symmetry,
)
from .metastable import (
    MetastableQuery,
    MetastableResult,
    Certainty,
    BreakpointLambda,
    ambiguity_set,
    metastable_fast_path,
    metastable_general,
    regime_table,
)

__version__ = "0.1.0"
