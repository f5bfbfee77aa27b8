"""Elementwise soft/hard shrinkage and the exact sparse-coding update."""

import numpy as np

from .errors import ConfigError


def soft(a, b):
    """sgn(a) * max(|a| - b, 0); the l1 proximal map."""
    a = np.asarray(a, dtype=np.float64)
    if np.any(np.asarray(b) < 0):
        raise ConfigError("soft threshold must be >= 0")
    return np.sign(a) * np.maximum(np.abs(a) - b, 0.0)


def hard(a, b):
    """a where |a| >= b, else 0; ties at |a| = b keep a."""
    a = np.asarray(a, dtype=np.float64)
    if np.any(np.asarray(b) < 0):
        raise ConfigError("hard threshold must be >= 0")
    return np.where(np.abs(a) >= b, a, 0.0)


def sparse_code(codes_in, lam, gamma):
    """Exact minimizer over z of lam*||c - z||_1 + gamma*||z||_0.

    Elementwise hard threshold at gamma/lam: keeping a coordinate costs
    gamma, zeroing it costs lam*|c|, and ties resolve to keep.
    """
    if lam <= 0:
        raise ConfigError("lam must be > 0")
    if gamma < 0:
        raise ConfigError("gamma must be >= 0")
    return hard(codes_in, gamma / lam)
