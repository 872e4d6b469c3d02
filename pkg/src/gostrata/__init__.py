"""Exact-arithmetic toolkit for stratum combinatorics on cyclic embedding sets,
the link calculus on bands, rational Picard bookkeeping, and a truncated-Witt
Dieudonne module simulator."""

__all__ = [
    "places",
    "strata",
    "links",
    "witt",
    "dieudonne",
    "picard",
    "cli",
]

__version__ = "0.1.0"
