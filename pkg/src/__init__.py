"""Closed-chain legged mechanism design toolkit."""
