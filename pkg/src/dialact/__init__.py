"""Contextual dialogue-act / question-answer sentence classification.

Desk-scale, self-contained: a gradient-checked tensor kernel, contextual
sentence encoders, a conversation-level combiner with label feedback, a
confidence-gated rule fallback, and a training/evaluation pipeline.
"""

__version__ = "0.1.0"
