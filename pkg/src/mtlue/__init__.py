"""Multitask user embeddings adapted to user interests, with intrinsic and
extrinsic evaluation tools."""

__version__ = "0.1.0"
