"""Inference privacy: budgets, calibrated noise mechanisms, Lipschitz bounds and audits."""

__version__ = "0.1.0"
