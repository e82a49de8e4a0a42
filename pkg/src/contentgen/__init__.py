"""Two-step dialog response generation: content words first, then the sentence."""

__version__ = "0.1.0"
