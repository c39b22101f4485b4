"""Riverine flood-extent forecasting from gauge water levels."""

__version__ = "0.1.0"
