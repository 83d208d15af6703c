"""Network assembly and checkpoints."""
