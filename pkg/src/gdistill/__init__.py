"""Graph tool-chaining RL harness: progressive distillation rewards, PPO and
structure-aware test-time adaptation."""

__version__ = "0.1.0"
