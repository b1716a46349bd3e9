"""Channel codes used to measure the block-error cost of L-value quantization."""

from .interleave import deinterleave, interleave
from .ldpc import AlistError, LdpcCode, format_alist, ldpc_load, parse_alist, wifi_648_r12
from .polar import PolarCode, format_frozen_set, polar_construct, read_frozen_set

__all__ = [
    "AlistError",
    "LdpcCode",
    "PolarCode",
    "deinterleave",
    "format_alist",
    "format_frozen_set",
    "interleave",
    "ldpc_load",
    "parse_alist",
    "polar_construct",
    "read_frozen_set",
    "wifi_648_r12",
]
