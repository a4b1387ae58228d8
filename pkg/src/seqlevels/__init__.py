"""seqlevels: solvers for mixed-integer multi-level problems with sequential followers."""

__version__ = "0.1.0"
