"""
Random variates for the alpha-stable motion.

The isotropic alpha-stable process is Brownian motion run at an
(alpha/2)-stable subordinator clock: X_t = B_{2 S_t}. One-sided stable
variates come from Kanter's representation
S = (A(U) / E)^((1-a)/a) with U uniform on (0, pi) and E standard
exponential, which has Laplace transform exp(-lambda^a).
"""

from typing import List

import numpy as np

from src.errors import DomainError
from src.stable.kernel import zolotarev_log_a
from src.stable.params import StableParams


def block_generators(seed: int, n_blocks: int) -> List[np.random.Generator]:
    """Independent counter-based streams, one per block, from a single seed."""
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def one_sided_stable(a: float, size, rng: np.random.Generator) -> np.ndarray:
    """
    Positive stable variates with E exp(-lambda S) = exp(-lambda^a).

    Args:
        a: index in (0, 1)
        size: output shape
        rng: generator

    Returns:
        np.ndarray: strictly positive samples
    """
    if not (0.0 < a < 1.0):
        raise DomainError(f"Subordinator index {a} outside (0, 1)")
    u = rng.uniform(0.0, np.pi, size=size)
    e = rng.standard_exponential(size=size)
    log_s = (1.0 - a) / a * (zolotarev_log_a(u, a) - np.log(e))
    return np.exp(log_s)


def subordinator_increments(params: StableParams, dt: float, size,
                            rng: np.random.Generator) -> np.ndarray:
    """S_dt = dt^(2/alpha) S_1 for the (alpha/2)-stable clock."""
    if not dt > 0.0:
        raise DomainError(f"Step dt={dt} must be positive")
    a = params.alpha / 2.0
    return dt ** (1.0 / a) * one_sided_stable(a, size, rng)


def stable_increments(params: StableParams, dt: float, n: int,
                      rng: np.random.Generator) -> np.ndarray:
    """n increments of the isotropic stable process over dt, shape (n, d)."""
    s = subordinator_increments(params, dt, n, rng)
    z = rng.standard_normal((n, params.d))
    return np.sqrt(2.0 * s)[:, None] * z


def sample_subordinator(alpha_half: float, t: float, rng: np.random.Generator,
                        size=None) -> np.ndarray:
    """
    S_t of the alpha_half-stable subordinator: E exp(-lambda S_t) = exp(-t lambda^alpha_half).

    Uses the self-similarity S_t = t^(1/alpha_half) S_1.
    """
    if not t > 0.0:
        raise DomainError(f"Time t={t} must be positive")
    return t ** (1.0 / alpha_half) * one_sided_stable(alpha_half, size, rng)


def sample_stable_increment(params: StableParams, dt: float, rng: np.random.Generator,
                            size=None) -> np.ndarray:
    """
    Increment of the rotationally symmetric stable process over dt.

    Returns shape (d,) when size is None, else (size, d).
    """
    n = 1 if size is None else int(size)
    increments = stable_increments(params, dt, n, rng)
    return increments[0] if size is None else increments
