"""Reasoning-chain generation, preference data and DPO evaluation pipeline."""

__version__ = "0.1.0"
