"""Latency-aware fire-rescue simulator with a reflex + async-reflector agent."""

__version__ = "0.1.0"
