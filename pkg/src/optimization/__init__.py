"""Evolutionary optimization engine and design pipelines."""
