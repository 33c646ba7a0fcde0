"""Crash-aware multi-objective controller tuning."""
