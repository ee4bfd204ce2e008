"""Semi-automated multi-concept scene composition pipeline.

Takes a handful of reference photos per concept, asks a language model
for a plausible scene layout, composites the cutouts onto a real
background, repaints the result for visual coherence, captions it, and
hands the candidates to a human review queue.  Ships a compositional
CLIP-based metric for scoring how well each concept survived.
"""

__version__ = "0.1.0"
