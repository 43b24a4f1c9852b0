"""Desk-scale simulator of a parallel-file-system client I/O path with the
CARAT online tuning stack: client-local metrics, a learned improvement
classifier, a conditional-score-greedy RPC tuner, a rule-based cache
allocator, and a two-stage per-client controller.
"""

__version__ = "0.1.0"
