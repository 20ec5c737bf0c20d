"""Guard strengthening for probabilistic loops."""
