"""Replicable learning of large-margin halfspaces.

Three learners share the same contract: given sample access to a
halfspace distribution with margin tau, return a unit hypothesis vector
together with a discrete canonical token.  Runs that share internal
randomness land on the same token with probability at least 1 - rho,
even though they see independent datasets.
"""

from repmargin.randomness import SharedSeed, RandomStream, derive_stream
from repmargin.rounding import RoundingGrid, GridPoint, make_grid, ak_round
from repmargin.projection import JLMatrix, sample_jl, project, required_dim
from repmargin.data import Dataset, MarginSpec, gen_dataset, error_rate, margin_loss_rate
from repmargin.margin_solvers import Halfspace, InfeasibleMargin, svm_margin, boost_sgd
from repmargin.learners import LearnParams, LearnerOutput, BudgetExceeded, algo2, algo3, algo4

__all__ = [
    "SharedSeed",
    "RandomStream",
    "derive_stream",
    "RoundingGrid",
    "GridPoint",
    "make_grid",
    "ak_round",
    "JLMatrix",
    "sample_jl",
    "project",
    "required_dim",
    "Dataset",
    "MarginSpec",
    "gen_dataset",
    "error_rate",
    "margin_loss_rate",
    "Halfspace",
    "InfeasibleMargin",
    "svm_margin",
    "boost_sgd",
    "LearnParams",
    "LearnerOutput",
    "BudgetExceeded",
    "algo2",
    "algo3",
    "algo4",
]

__version__ = "0.1.0"
