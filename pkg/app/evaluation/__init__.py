"""Metrics, the constant-velocity baseline, the evaluation harness and plots."""
