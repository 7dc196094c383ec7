"""Spiral-scan selective state-space classifier for polarimetric SAR imagery."""

from . import config, encoder, fusion, io, metrics, polsar, ssm, store, tensor, train

__version__ = "0.1.0"
