"""Synthetic scene generation and the scene/prediction file formats."""
