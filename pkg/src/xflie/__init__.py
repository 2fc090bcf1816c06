"""Layered semantic graph construction, hierarchical planning and benchmarking
for simulated inspect-explore missions."""

__version__ = "0.1.0"
