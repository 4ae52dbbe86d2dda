"""Priority-aware model-distributed inference over simulated edge networks."""

__version__ = "0.1.0"
