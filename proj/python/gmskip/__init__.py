"""Python bindings for the gmskip block-skipping search."""

from ._core import (
    GmSkipError,
    SkipConfig,
    cider,
    compare_latency,
    format_fixed,
    forward_macs,
    search,
    search_toy,
    sparsity_pct,
)

__all__ = [
    "GmSkipError",
    "SkipConfig",
    "cider",
    "compare_latency",
    "format_fixed",
    "forward_macs",
    "search",
    "search_toy",
    "sparsity_pct",
]
