"""Latency-optimal UAV-assisted multimodal federated learning."""

__version__ = "0.1.0"
