"""Multi-modality prostate MRI classification pipeline with attention auditing."""

__version__ = "0.1.0"
