"""Multi-agent RL guided online fuzzing of driving policies in a 2D lane simulator."""

__version__ = "0.1.0"
