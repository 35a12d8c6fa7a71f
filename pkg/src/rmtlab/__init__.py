"""Numerical laboratory for generalized Wigner matrices.

Sampling, AB labels, resolvent identities, local-law and delocalization
envelopes, the matrix Ornstein-Uhlenbeck flow, eigenvalue statistics,
large-deviation and continuity bounds, and a reproducible experiment
harness.
"""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from . import errors  # noqa: E402,F401
