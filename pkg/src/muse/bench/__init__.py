"""Reference-free scoring: closed-form formulas plus run evaluation."""

from . import formulas
from .scoring import COLUMNS, evaluate_run, write_scores

__all__ = ["COLUMNS", "evaluate_run", "formulas", "write_scores"]
