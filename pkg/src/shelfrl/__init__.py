"""Per-product reinforcement learning for capacity-constrained shelf replenishment."""

__version__ = "0.1.0"
