"""Unsupervised alignment of speech feature spans to translation words.

The package learns, without supervision, which span of a continuous
feature sequence realizes each word of a parallel sentence.  It combines
a DTW-based segment clustering model with a two-sided span distortion
model and trains both with hard EM.
"""

__version__ = "0.1.0"
