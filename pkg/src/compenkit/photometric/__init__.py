"""Photometric compensation network."""

from compenkit.photometric.panet import PANet, decode, encode, panet_forward, pixel_attention

__all__ = ["PANet", "decode", "encode", "panet_forward", "pixel_attention"]
