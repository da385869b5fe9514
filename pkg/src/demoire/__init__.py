"""Directional block-DCT moiré removal, multi-frame alignment and bilateral-grid tone refinement."""

__version__ = "0.1.0"
