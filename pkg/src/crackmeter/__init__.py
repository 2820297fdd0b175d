"""Brick-anchored crack measurement and COCO-style evaluation for masonry walls."""

__version__ = "0.1.0"
