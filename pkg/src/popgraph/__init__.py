"""Population protocols on graphs: phase clocks, token shuffling and exact chain oracles."""

__version__ = "0.1.0"
