"""Tool-augmented inspection harness for 1-D spectra.

Core pieces: the spectrum data model, the deterministic visualization tool,
the interleaved rollout engine with scripted and HTTP policies, outcome
rewards with group advantages and loss masks, benchmark construction with
hard-negative rejection sampling, evaluation metrics, and an annotation
service for expert review.
"""

__version__ = "0.1.0"
