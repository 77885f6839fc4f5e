"""Energy-aware runtime configuration of a heterogeneous big.LITTLE SoC.

A trace-driven simulator and library for learning per-epoch hardware
configurations (core counts and cluster frequencies) online: a supervised
policy imitates an energy-optimal oracle, recursive-least-squares power and
time models track the platform, and a budgeted local search supplies oracle
labels at runtime so the policy keeps improving on unseen workloads.
"""
from .space import KNOBS, ConfigSpace, Configuration

__version__ = "0.1.0"

__all__ = ["KNOBS", "ConfigSpace", "Configuration", "__version__"]
