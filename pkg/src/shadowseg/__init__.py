"""Bubble shadowgraph segmentation: synthetic data, a small U-net, watershed
splitting of overlapping particles and size/shape statistics."""

__version__ = "0.1.0"
