"""Motion-domain face frontalization: flow frontalization, motion warping, evaluation."""

__version__ = "0.1.0"
