"""
Fractional Laplacian of smooth test functions.

    Delta^(alpha/2) f(x) = c_{d,alpha} p.v. int (f(x+z) - f(x)) |z|^(-d-alpha) dz

with c_{d,alpha} from levy_constant, so the symbol is -|xi|^alpha. The
principal value is taken in the compensated form, split at |z| = 1; near
z = 0 the second-order Taylor term replaces the difference quotient.
"""

import logging
import math
from typing import List

import numpy as np

from src.errors import DomainError
from src.stable.kernel import DEFAULT_QUAD, _quad, levy_constant
from src.stable.params import QuadratureConfig, StableParams, TestFunction

logger = logging.getLogger(__name__)

TAYLOR_RADIUS = 1e-3


def _directions(d: int, n_angles: int):
    """Half-sphere directions and weights (symmetric differences cover the rest)."""
    if d == 1:
        return np.array([[1.0]]), np.array([1.0])
    if d == 2:
        theta = np.pi * np.arange(n_angles) / n_angles
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return dirs, np.full(n_angles, np.pi / n_angles)
    if d == 3:
        mu, w_mu = np.polynomial.legendre.leggauss(max(n_angles // 4, 8))
        # upper hemisphere: cos(polar) in (0, 1)
        mu = 0.5 * (mu + 1.0)
        w_mu = 0.5 * w_mu
        psi = 2.0 * np.pi * np.arange(n_angles) / n_angles
        m, p = np.meshgrid(mu, psi, indexing='ij')
        s = np.sqrt(1.0 - m * m)
        dirs = np.stack([s * np.cos(p), s * np.sin(p), m], axis=-1).reshape(-1, 3)
        weights = (w_mu[:, None] * np.full(n_angles, 2.0 * np.pi / n_angles)[None, :]).ravel()
        return dirs, weights
    raise DomainError(f"Angular quadrature is available for d <= 3, got d={d}")


def _radial_breaks(f: TestFunction, x: np.ndarray, theta: np.ndarray) -> List[float]:
    """Radii where the line x + r theta crosses the support (or plateau) sphere."""
    c = np.asarray(f.center, dtype=float)
    radii = [f.support_radius]
    if 'inner_radius' in f.metadata:
        radii.append(float(f.metadata['inner_radius']))
    out = []
    offset = x - c
    proj = float(offset @ theta)
    rest = float(offset @ offset) - proj * proj
    for rr in radii:
        disc = rr * rr - rest
        if disc <= 0.0:
            continue
        for sign in (-1.0, 1.0):
            hit = abs(-proj + sign * math.sqrt(disc))
            if hit > 0.0:
                out.append(hit)
    return sorted(set(out))


def frac_laplacian_apply(params: StableParams, f: TestFunction, x,
                         quad: QuadratureConfig = DEFAULT_QUAD,
                         n_angles: int = 96) -> float:
    """
    Apply Delta^(alpha/2) to f at x.

    Args:
        params: stable parameters
        f: test function with value and Hessian closures
        x: evaluation point
        quad: radial quadrature accuracy
        n_angles: angular resolution

    Returns:
        float: Delta^(alpha/2) f(x)
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d,):
        raise DomainError(f"Point has shape {x.shape}, expected ({params.d},)")
    alpha = params.alpha
    fx = float(f(x))
    hess = np.asarray(f.hessian(x), dtype=float)
    reach = float(np.linalg.norm(x - np.asarray(f.center))) + f.support_radius
    far = max(reach, 1.0)
    eps = TAYLOR_RADIUS

    dirs, weights = _directions(params.d, n_angles)
    total = 0.0
    for theta, w in zip(dirs, weights):
        def second_difference(r: float, theta=theta) -> float:
            step = r * theta
            return (float(f(x + step)) + float(f(x - step)) - 2.0 * fx) * r ** (-1.0 - alpha)

        curvature = float(theta @ hess @ theta)
        near = curvature * eps ** (2.0 - alpha) / (2.0 - alpha)
        breaks = [b for b in _radial_breaks(f, x, theta) if eps < b < far]
        inner = _quad(second_difference, eps, 1.0, quad, 'fractional Laplacian',
                      points=[b for b in breaks if b < 1.0] or None)
        outer = 0.0
        if far > 1.0:
            outer = _quad(second_difference, 1.0, far, quad, 'fractional Laplacian',
                          points=[b for b in breaks if b > 1.0] or None)
        # beyond the support both shifted values vanish
        tail = -2.0 * fx * far ** (-alpha) / alpha
        total += w * (near + inner + outer + tail)

    # symmetric differences: (1/2) over the full sphere = full weight on the half sphere
    value = levy_constant(params) * total
    logger.debug(f"Fractional Laplacian of {f.name} at {x.tolist()}: {value:.6e}")
    return value


def frac_laplacian_spectral(params: StableParams, f: TestFunction, x,
                            half_width: float = 8.0, n: int = 256) -> float:
    """
    Fourier-multiplier oracle: apply -|xi|^alpha on a periodic lattice
    centred at x and read off the centre node.
    """
    x = np.asarray(x, dtype=float)
    d = params.d
    h = 2.0 * half_width / n
    axis = (np.arange(n) - n // 2) * h
    mesh = np.meshgrid(*([axis] * d), indexing='ij')
    points = np.stack(mesh, axis=-1) + x
    values = f(points)
    freq = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    kmesh = np.meshgrid(*([freq] * d), indexing='ij')
    symbol = -sum(k * k for k in kmesh) ** (params.alpha / 2.0)
    out = np.fft.ifftn(symbol * np.fft.fftn(values)).real
    return float(out[(n // 2,) * d])
