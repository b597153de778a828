"""Pluralistic image completion: chunked shared-codebook VQ, a visibility-
weighted bidirectional transformer, one-shot multi-sample decoding, and a
small refinement stage, all on a numpy autodiff core."""

__version__ = "0.1.0"
