"""Fine-tuning dataset tooling for LLM-based load profile restoration."""

__version__ = "0.1.0"
