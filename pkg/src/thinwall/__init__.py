"""Thin-wall quantization of a charged particle on curved surfaces."""

__version__ = "0.1.0"
