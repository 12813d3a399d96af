"""Prompt-guided attention-head selection for focus-oriented image retrieval.

A deterministic toy vision transformer exposes its last-layer per-head
attention; a visual prompt (point, box or segment) scores each head by the
attention mass it puts on the prompted patches, the best heads are kept, and
the CLS feature is recombined from the cached head contributions.  On top of
that sit an exact cosine-similarity store, the baselines (plain search,
pixel masking, cropping, attention masking), category-balanced evaluation
metrics, an experiment harness with a CLI, and a small HTTP service.
"""

__version__ = "0.1.0"
