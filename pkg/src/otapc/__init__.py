"""Optimal transmit power control for over-the-air federated gradient aggregation."""

__version__ = "0.1.0"
