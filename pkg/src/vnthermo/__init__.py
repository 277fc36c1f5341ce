"""Finite-dimensional quantum thermodynamics: density operators, entropy ledgers and second-law audits."""

from .engine import Protocol, RunConfig, Step, audit, cycle_closure, run
from .protocols import BUILTINS, builtin

__version__ = "0.1.0"
__all__ = ["Protocol", "RunConfig", "Step", "run", "audit", "cycle_closure", "builtin", "BUILTINS"]
