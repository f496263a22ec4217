"""Steady-state SMS-EMOA with an epsilon-dominance elitist archive."""

from .archive import Archive, elitist_insert, epsilon_filter, least_contributor
from .dominance import dominates, epsilon_dominance_matrix, epsilon_dominates, nondominated_ranks, pareto_filter
from .hypervolume import contributions, hv_contribution, hypervolume
from .individual import EmoaConfig, Individual, random_individual
from .smsemoa import make_offspring, sms_emoa_run, tournament
from .variation import reflect, sbx_crossover, sbx_pair, self_adaptive_mutation

__all__ = [
    "Archive",
    "EmoaConfig",
    "Individual",
    "contributions",
    "dominates",
    "elitist_insert",
    "epsilon_dominance_matrix",
    "epsilon_dominates",
    "epsilon_filter",
    "hv_contribution",
    "hypervolume",
    "least_contributor",
    "make_offspring",
    "nondominated_ranks",
    "pareto_filter",
    "random_individual",
    "reflect",
    "sbx_crossover",
    "sbx_pair",
    "self_adaptive_mutation",
    "sms_emoa_run",
    "tournament",
]
