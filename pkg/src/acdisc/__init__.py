"""Numerical toolkit for pseudoholomorphic discs and Kobayashi metric bounds
on almost complex domains."""
from .acs_core import DomainSpec, StructureField, standard_structure, structure_from_H
from .charts import QField, TamedChart, build_tamed_chart
from .disc_solver import DiscGrid, DiscSolution, solve_attached_disc, solve_disc
from .harness import ExperimentConfig, theorem_scaling_study
from .kobayashi import (BoundReport, localization, lower_bound, lower_bound_basepoint,
                        lower_bound_chart, upper_bound_search)
from .levi import lambda0, levi_form, levi_matrix
from .psh import PshBuilderParams, epsilon_m, psh_log_builder

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "DiscGrid", "DiscSolution", "DomainSpec", "ExperimentConfig",
    "PshBuilderParams", "QField", "StructureField", "TamedChart", "build_tamed_chart",
    "epsilon_m", "lambda0", "levi_form", "levi_matrix", "localization", "lower_bound",
    "lower_bound_basepoint", "lower_bound_chart", "psh_log_builder", "solve_attached_disc",
    "solve_disc", "standard_structure", "structure_from_H", "theorem_scaling_study",
    "upper_bound_search",
]
