"""Streaming segmentation, embedding and clustering of action primitives
from keypoint-track streams."""

__version__ = "0.1.0"
