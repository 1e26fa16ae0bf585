"""Loss terms and the training loop."""
