"""Encoders, heads, the future relationship module and the assembled predictor."""
