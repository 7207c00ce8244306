"""Database knob tuning: LLM advisors, classical optimizers and evaluation metrics."""

__version__ = "0.1.0"
